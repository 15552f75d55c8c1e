#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flip/panel.hpp"
#include "flip/weights.hpp"

namespace flip {

struct BackendConfig {
  enum class Kind { linear, logistic, knn, tree, ensemble };
  Kind kind = Kind::ensemble;
  int knn_k = 10;
  int tree_depth = 4;

  // Accepts linear|logistic|knn:k|tree:depth|ensemble.
  static BackendConfig parse(std::string_view text);
  std::string name() const;
};

// A fitted regression; predict must return a finite value on any row with the
// training dimension.
class RegressionModel {
 public:
  virtual ~RegressionModel() = default;
  virtual double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const = 0;

  Eigen::VectorXd predict_all(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = predict(X.row(i));
    return out;
  }
};

// Deterministic given (data, hyperparameters, seed).
class RegressionBackend {
 public:
  virtual ~RegressionBackend() = default;
  virtual std::unique_ptr<RegressionModel> fit(const Eigen::MatrixXd& X,
                                               const Eigen::VectorXd& y,
                                               std::uint64_t seed) const = 0;
  virtual std::string id() const = 0;
};

// binary_response selects learners appropriate for a 0/1 target (the ensemble
// drops the logistic learner for continuous targets).
std::unique_ptr<RegressionBackend> make_backend(const BackendConfig& config,
                                                bool binary_response);

// Cross-fitted per-observation, per-timepoint nuisance values for one target
// regime and weight. Everything is stored at the observed histories;
// m0/m1 are the sequential regressions with A_t forced to 0/1.
struct NuisanceSet {
  int horizon = 0;
  std::size_t n = 0;
  double clip = 0.0;
  // All indexed [t-1][i].
  std::vector<std::vector<double>> pi1;    // P(A_t = 1 | H_t)
  std::vector<std::vector<double>> q0;     // Q_t(0 | H_t)
  std::vector<std::vector<double>> q1;     // Q_t(1 | H_t)
  std::vector<std::vector<double>> r_obs;  // Q_t(A_t|H_t) / P(A_t|H_t)
  std::vector<std::vector<double>> m0;     // m_t(0, H_t)
  std::vector<std::vector<double>> m1;     // m_t(1, H_t)
  // Which fold's rotation produced each observation's predictions (-1 when
  // the values are exact rather than fitted).
  std::vector<int> provenance;
  // Plug-in mean m_0 (set by the estimator combine step).
  double m0_plugin = 0.0;

  void resize(int horizon_in, std::size_t n_in);
  // Fills q0/q1/r_obs from pi1 given the regime, weight and observed
  // treatments. Throws IdentificationError on Q>0 over a zero-probability arm.
  void derive_intervention_terms(const PanelDataset& data,
                                 const TargetRegime& regime,
                                 const SmoothWeight& weight);
  // Checks the documented invariants (clip range, Q0+Q1=1, cross-fit
  // provenance against a fold assignment when given).
  void validate(const FoldAssignment* folds = nullptr) const;
};

// Cross-fitted propensity models: one model per (rotation, timepoint), each
// trained on the complement of the rotation's evaluation fold.
class CrossFitPropensities {
 public:
  CrossFitPropensities(const PanelDataset& data, const FoldAssignment& folds,
                       const BackendConfig& config, double clip,
                       std::uint64_t seed);

  // P(A_t=1 | H_t) for every observation, predicted by rotation k's models.
  const std::vector<std::vector<double>>& rotation(int k) const {
    return full_[static_cast<std::size_t>(k)];
  }
  // Cross-fitted view: observation i's value comes from rotation fold(i).
  std::vector<std::vector<double>> cross_fitted() const;

  int rotations() const { return static_cast<int>(full_.size()); }
  double clip() const { return clip_; }

 private:
  std::vector<std::vector<std::vector<double>>> full_;  // [k][t-1][i]
  FoldAssignment folds_;
  double clip_;
};

// Cross-fitted propensities: observation i predicted by the model trained
// without fold(i).
std::vector<std::vector<double>> fit_propensities(const PanelDataset& data,
                                                  const FoldAssignment& folds,
                                                  const BackendConfig& config,
                                                  double clip,
                                                  std::uint64_t seed);

struct SequentialFitResult {
  std::vector<double> m0;  // prediction with A_t forced to 0, every obs
  std::vector<double> m1;  // prediction with A_t forced to 1
};

// Fits one sequential regression of `pseudo` on (A_t, H_t) per rotation and
// returns the cross-fitted per-observation predictions, truncated to the
// training pseudo-outcome range expanded by 10%.
SequentialFitResult fit_sequential_regression(const std::vector<double>& pseudo,
                                              int t, const PanelDataset& data,
                                              const FoldAssignment& folds,
                                              const BackendConfig& config,
                                              std::uint64_t seed);

// Single-rotation building block used inside the estimator loops: fit on
// train_rows, predict both arms for all rows, truncate to the training range
// +/- 10%.
SequentialFitResult fit_arm_regression(const Eigen::MatrixXd& history_features,
                                       const std::vector<int>& treatments,
                                       const std::vector<double>& pseudo,
                                       const std::vector<std::size_t>& train_rows,
                                       const RegressionBackend& backend,
                                       std::uint64_t seed);

// Synthetic nuisance corruption: clip(true + n^{-alpha} (1 + G_i), lo, hi)
// with independent standard Gaussians, emulating an estimator whose error
// decays at rate n^{-alpha}. The deterministic +1 keeps the bias from
// averaging out, so slow rates actually break coverage downstream.
std::vector<double> oracle_noise_nuisance(const std::vector<double>& truth,
                                          std::size_t n, double alpha,
                                          std::uint64_t seed, double lo,
                                          double hi);

}  // namespace flip
