#include <algorithm>
#include <cmath>

#include "flip/nuisance.hpp"
#include "flip/simd/kernels.hpp"
#include "flip/util/error.hpp"
#include "flip/util/rng.hpp"

namespace flip {

namespace {

Eigen::MatrixXd history_matrix(const PanelDataset& data, int t) {
  const std::size_t len = history_length(data, t);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(data.size()),
                    static_cast<Eigen::Index>(len));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const HistoryView h = history(data, i, t);
    for (std::size_t j = 0; j < len; ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h.features[j];
  }
  return X;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X,
                          const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<std::size_t> complement_rows(const FoldAssignment& folds, int fold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < folds.labels.size(); ++i)
    if (folds.labels[i] != fold) out.push_back(i);
  return out;
}

}  // namespace

CrossFitPropensities::CrossFitPropensities(const PanelDataset& data,
                                           const FoldAssignment& folds,
                                           const BackendConfig& config,
                                           double clip, std::uint64_t seed)
    : folds_(folds), clip_(clip) {
  if (!(clip >= 0.0 && clip <= 0.1))
    throw ValidationError("propensity clip must lie in [0, 0.1]");
  const auto backend = make_backend(config, /*binary_response=*/true);
  const int T = data.horizon();
  const int K = folds.k;
  full_.assign(static_cast<std::size_t>(K),
               std::vector<std::vector<double>>(
                   static_cast<std::size_t>(T), std::vector<double>(data.size())));

  for (int t = 1; t <= T; ++t) {
    const Eigen::MatrixXd X = history_matrix(data, t);
    Eigen::VectorXd a(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i)
      a[static_cast<Eigen::Index>(i)] = data.treatment(i, t);
    for (int k = 0; k < K; ++k) {
      const auto train = complement_rows(folds, k);
      Eigen::VectorXd a_train(static_cast<Eigen::Index>(train.size()));
      for (std::size_t i = 0; i < train.size(); ++i)
        a_train[static_cast<Eigen::Index>(i)] = a[static_cast<Eigen::Index>(train[i])];
      std::unique_ptr<RegressionModel> model;
      try {
        model = backend->fit(take_rows(X, train), a_train,
                             rng::derive_seed(seed, {0x70726f70ull,
                                                     static_cast<std::uint64_t>(t),
                                                     static_cast<std::uint64_t>(k)}));
      } catch (const Error& e) {
        throw BackendError("propensity fit failed at t=" + std::to_string(t) +
                           ", fold " + std::to_string(k) + ": " + e.what());
      }
      auto& out = full_[static_cast<std::size_t>(k)][static_cast<std::size_t>(t - 1)];
      for (std::size_t i = 0; i < data.size(); ++i) {
        double p = model->predict(X.row(static_cast<Eigen::Index>(i)));
        if (!std::isfinite(p))
          throw BackendError("propensity prediction non-finite at t=" +
                             std::to_string(t) + ", fold " + std::to_string(k));
        p = std::min(1.0, std::max(0.0, p));
        p = std::min(1.0 - clip, std::max(clip, p));
        out[i] = p;
      }
    }
  }
}

std::vector<std::vector<double>> CrossFitPropensities::cross_fitted() const {
  const int T = static_cast<int>(full_.front().size());
  const std::size_t n = folds_.labels.size();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(T),
                                       std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const int k = folds_.labels[i];
    for (int t = 0; t < T; ++t)
      out[static_cast<std::size_t>(t)][i] =
          full_[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)][i];
  }
  return out;
}

std::vector<std::vector<double>> fit_propensities(const PanelDataset& data,
                                                  const FoldAssignment& folds,
                                                  const BackendConfig& config,
                                                  double clip,
                                                  std::uint64_t seed) {
  return CrossFitPropensities(data, folds, config, clip, seed).cross_fitted();
}

SequentialFitResult fit_arm_regression(const Eigen::MatrixXd& history_features,
                                       const std::vector<int>& treatments,
                                       const std::vector<double>& pseudo,
                                       const std::vector<std::size_t>& train_rows,
                                       const RegressionBackend& backend,
                                       std::uint64_t seed) {
  const std::size_t n = pseudo.size();
  for (double v : pseudo)
    if (!std::isfinite(v)) throw BackendError("pseudo-outcome is non-finite");

  // Design is (H_t, A_t); predictions are produced with A_t forced to each arm.
  const Eigen::Index p = history_features.cols();
  Eigen::MatrixXd X_train(static_cast<Eigen::Index>(train_rows.size()), p + 1);
  Eigen::VectorXd y_train(static_cast<Eigen::Index>(train_rows.size()));
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    const std::size_t r = train_rows[i];
    X_train.row(static_cast<Eigen::Index>(i)).head(p) =
        history_features.row(static_cast<Eigen::Index>(r));
    X_train(static_cast<Eigen::Index>(i), p) = treatments[r];
    y_train[static_cast<Eigen::Index>(i)] = pseudo[r];
    lo = std::min(lo, pseudo[r]);
    hi = std::max(hi, pseudo[r]);
  }
  const auto model = backend.fit(X_train, y_train, seed);

  // Truncate to the training pseudo-outcome range expanded by 10%, keeping
  // the fitted regressions uniformly bounded.
  const double pad = 0.1 * (hi - lo);
  lo -= pad;
  hi += pad;

  SequentialFitResult out;
  out.m0.resize(n);
  out.m1.resize(n);
  Eigen::RowVectorXd row(p + 1);
  for (std::size_t i = 0; i < n; ++i) {
    row.head(p) = history_features.row(static_cast<Eigen::Index>(i));
    row[p] = 0.0;
    out.m0[i] = std::min(hi, std::max(lo, model->predict(row)));
    row[p] = 1.0;
    out.m1[i] = std::min(hi, std::max(lo, model->predict(row)));
    if (!std::isfinite(out.m0[i]) || !std::isfinite(out.m1[i]))
      throw BackendError("sequential regression prediction non-finite");
  }
  return out;
}

SequentialFitResult fit_sequential_regression(const std::vector<double>& pseudo,
                                              int t, const PanelDataset& data,
                                              const FoldAssignment& folds,
                                              const BackendConfig& config,
                                              std::uint64_t seed) {
  if (pseudo.size() != data.size())
    throw ValidationError("pseudo-outcome length does not match the panel");
  const auto backend = make_backend(config, /*binary_response=*/false);
  const Eigen::MatrixXd H = history_matrix(data, t);
  std::vector<int> a(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) a[i] = data.treatment(i, t);

  SequentialFitResult out;
  out.m0.assign(data.size(), 0.0);
  out.m1.assign(data.size(), 0.0);
  for (int k = 0; k < folds.k; ++k) {
    SequentialFitResult rot;
    try {
      rot = fit_arm_regression(H, a, pseudo, complement_rows(folds, k), *backend,
                               rng::derive_seed(seed, {0x7365714dull,
                                                       static_cast<std::uint64_t>(t),
                                                       static_cast<std::uint64_t>(k)}));
    } catch (const Error& e) {
      throw BackendError("sequential regression failed at t=" + std::to_string(t) +
                         ", fold " + std::to_string(k) + ": " + e.what());
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (folds.labels[i] == k) {
        out.m0[i] = rot.m0[i];
        out.m1[i] = rot.m1[i];
      }
    }
  }
  return out;
}

void NuisanceSet::resize(int horizon_in, std::size_t n_in) {
  horizon = horizon_in;
  n = n_in;
  const auto blank = std::vector<std::vector<double>>(
      static_cast<std::size_t>(horizon), std::vector<double>(n, 0.0));
  pi1 = blank;
  q0 = blank;
  q1 = blank;
  r_obs = blank;
  m0 = blank;
  m1 = blank;
  provenance.assign(n, -1);
}

void NuisanceSet::derive_intervention_terms(const PanelDataset& data,
                                            const TargetRegime& regime,
                                            const SmoothWeight& weight) {
  if (regime.horizon() != horizon)
    throw ValidationError("regime horizon does not match nuisance set");
  const auto& k = simd::active();
  std::vector<double> pa(n), s(n), qt(n), qo(n);
  for (int t = 1; t <= horizon; ++t) {
    const int a_t = regime.arm(t);
    const auto& p1 = pi1[static_cast<std::size_t>(t - 1)];
    for (std::size_t i = 0; i < n; ++i) pa[i] = (a_t == 1) ? p1[i] : 1.0 - p1[i];
    k.weight_batch(static_cast<int>(weight.kind), weight.rate_k, pa.data(), n,
                   s.data(), nullptr);
    k.flip_propensities(n, pa.data(), s.data(), qt.data(), qo.data());
    auto& Q0 = q0[static_cast<std::size_t>(t - 1)];
    auto& Q1 = q1[static_cast<std::size_t>(t - 1)];
    auto& R = r_obs[static_cast<std::size_t>(t - 1)];
    for (std::size_t i = 0; i < n; ++i) {
      Q1[i] = (a_t == 1) ? qt[i] : qo[i];
      Q0[i] = (a_t == 1) ? qo[i] : qt[i];
      const int a_obs = data.treatment(i, t);
      const double q_obs = (a_obs == 1) ? Q1[i] : Q0[i];
      const double p_obs = (a_obs == 1) ? p1[i] : 1.0 - p1[i];
      if (p_obs == 0.0) {
        if (q_obs == 0.0) {
          R[i] = 0.0;
        } else {
          throw IdentificationError(
              "observation " + data.id(i) + " at t=" + std::to_string(t) +
              ": intervention propensity is positive on an arm with zero "
              "estimated propensity");
        }
      } else {
        R[i] = q_obs / p_obs;
      }
    }
  }
}

void NuisanceSet::validate(const FoldAssignment* folds) const {
  for (int t = 0; t < horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = pi1[static_cast<std::size_t>(t)][i];
      if (!(p >= clip && p <= 1.0 - clip))
        throw ValidationError("pi_hat outside [clip, 1-clip]");
      const double qs = q0[static_cast<std::size_t>(t)][i] +
                        q1[static_cast<std::size_t>(t)][i];
      if (std::fabs(qs - 1.0) > 1e-12)
        throw ValidationError("Q0 + Q1 != 1");
    }
  }
  if (folds) {
    for (std::size_t i = 0; i < n; ++i)
      if (provenance[i] >= 0 && provenance[i] != folds->labels[i])
        throw ValidationError(
            "cross-fitting contract violated: prediction provenance does not "
            "match the observation's fold rotation");
  }
}

std::vector<double> oracle_noise_nuisance(const std::vector<double>& truth,
                                          std::size_t n, double alpha,
                                          std::uint64_t seed, double lo,
                                          double hi) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ValidationError("corruption rate exponent must lie in (0,1]");
  const double rate = std::pow(static_cast<double>(n), -alpha);
  rng::Stream stream(seed);
  std::vector<double> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    double v = truth[i] + rate * (1.0 + stream.gaussian());
    if (v < lo) v = lo;
    if (v > hi) v = hi;
    out[i] = v;
  }
  return out;
}

}  // namespace flip
