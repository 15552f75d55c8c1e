#include <algorithm>
#include <cmath>
#include <numeric>

#include "flip/nuisance.hpp"
#include "flip/util/error.hpp"
#include "flip/util/text.hpp"

namespace flip {

BackendConfig BackendConfig::parse(std::string_view t) {
  BackendConfig c;
  if (t == "linear") {
    c.kind = Kind::linear;
  } else if (t == "logistic") {
    c.kind = Kind::logistic;
  } else if (t == "ensemble") {
    c.kind = Kind::ensemble;
  } else if (t.rfind("knn", 0) == 0) {
    c.kind = Kind::knn;
    if (t.size() > 3) {
      long long k = 0;
      if (t[3] != ':' || !text::parse_long(t.substr(4), k) || k < 1)
        throw ConfigError("knn backend expects knn:<k>, got '" + std::string(t) + "'");
      c.knn_k = static_cast<int>(k);
    }
  } else if (t.rfind("tree", 0) == 0) {
    c.kind = Kind::tree;
    if (t.size() > 4) {
      long long d = 0;
      if (t[4] != ':' || !text::parse_long(t.substr(5), d) || d < 1)
        throw ConfigError("tree backend expects tree:<depth>, got '" + std::string(t) + "'");
      c.tree_depth = static_cast<int>(d);
    }
  } else {
    throw ConfigError("unknown backend '" + std::string(t) +
                      "' (expected linear|logistic|knn:k|tree:depth|ensemble)");
  }
  return c;
}

std::string BackendConfig::name() const {
  switch (kind) {
    case Kind::linear:
      return "linear";
    case Kind::logistic:
      return "logistic";
    case Kind::knn:
      return "knn:" + std::to_string(knn_k);
    case Kind::tree:
      return "tree:" + std::to_string(tree_depth);
    case Kind::ensemble:
      return "ensemble";
  }
  return "?";
}

namespace {

void check_finite(const Eigen::VectorXd& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) throw BackendError(std::string(what) + " is non-finite");
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  return Z;
}

// ----------------------------- linear (OLS) --------------------------------

class LinearModel final : public RegressionModel {
 public:
  explicit LinearModel(Eigen::VectorXd beta) : beta_(std::move(beta)) {}
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    double v = beta_[0];
    for (Eigen::Index j = 0; j < x.size(); ++j) v += beta_[j + 1] * x[j];
    return v;
  }

 private:
  Eigen::VectorXd beta_;
};

class LinearBackend final : public RegressionBackend {
 public:
  std::unique_ptr<RegressionModel> fit(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       std::uint64_t) const override {
    const Eigen::MatrixXd Z = with_intercept(X);
    Eigen::VectorXd beta = Z.colPivHouseholderQr().solve(y);
    check_finite(beta, "ols coefficient vector (singular design)");
    return std::make_unique<LinearModel>(std::move(beta));
  }
  std::string id() const override { return "linear"; }
};

// ------------------------- logistic (IRLS) ----------------------------------

class LogisticModel final : public RegressionModel {
 public:
  explicit LogisticModel(Eigen::VectorXd beta) : beta_(std::move(beta)) {}
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    double eta = beta_[0];
    for (Eigen::Index j = 0; j < x.size(); ++j) eta += beta_[j + 1] * x[j];
    eta = std::min(30.0, std::max(-30.0, eta));
    return 1.0 / (1.0 + std::exp(-eta));
  }

 private:
  Eigen::VectorXd beta_;
};

class LogisticBackend final : public RegressionBackend {
 public:
  std::unique_ptr<RegressionModel> fit(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       std::uint64_t) const override {
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y[i] != 0.0 && y[i] != 1.0)
        throw BackendError("logistic backend needs a 0/1 response");
    const Eigen::MatrixXd Z = with_intercept(X);
    const Eigen::Index p = Z.cols();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    // Small ridge keeps the weighted normal equations solvable under
    // separation; the linear predictor is capped so separable data converge
    // to saturated probabilities instead of diverging.
    const double ridge = 1e-8;
    double last_dev = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 50; ++iter) {
      Eigen::VectorXd eta = Z * beta;
      for (Eigen::Index i = 0; i < eta.size(); ++i)
        eta[i] = std::min(30.0, std::max(-30.0, eta[i]));
      Eigen::VectorXd mu(eta.size()), w(eta.size());
      double dev = 0.0;
      for (Eigen::Index i = 0; i < eta.size(); ++i) {
        mu[i] = 1.0 / (1.0 + std::exp(-eta[i]));
        mu[i] = std::min(1.0 - 1e-12, std::max(1e-12, mu[i]));
        w[i] = mu[i] * (1.0 - mu[i]);
        dev -= 2.0 * (y[i] * std::log(mu[i]) + (1.0 - y[i]) * std::log(1.0 - mu[i]));
      }
      Eigen::MatrixXd H = Z.transpose() * w.asDiagonal() * Z;
      H.diagonal().array() += ridge;
      const Eigen::VectorXd g = Z.transpose() * (y - mu);
      const Eigen::VectorXd step = H.ldlt().solve(g);
      check_finite(step, "logistic IRLS step");
      beta += step;
      if (std::fabs(last_dev - dev) < 1e-10 * (std::fabs(dev) + 1.0)) break;
      last_dev = dev;
    }
    check_finite(beta, "logistic coefficient vector");
    return std::make_unique<LogisticModel>(std::move(beta));
  }
  std::string id() const override { return "logistic"; }
};

// ----------------------------------- knn -----------------------------------

class KnnModel final : public RegressionModel {
 public:
  KnnModel(Eigen::MatrixXd X, Eigen::VectorXd y, Eigen::RowVectorXd center,
           Eigen::RowVectorXd scale, int k)
      : X_(std::move(X)), y_(std::move(y)), center_(std::move(center)),
        scale_(std::move(scale)), k_(k) {}

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    const Eigen::RowVectorXd z = (x - center_).cwiseQuotient(scale_);
    const Eigen::Index n = X_.rows();
    std::vector<std::pair<double, Eigen::Index>> d(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      d[static_cast<std::size_t>(i)] = {(X_.row(i) - z).squaredNorm(), i};
    const int k = std::min<int>(k_, static_cast<int>(n));
    // Index tiebreak keeps neighbor selection deterministic.
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += y_[d[static_cast<std::size_t>(j)].second];
    return s / k;
  }

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Eigen::RowVectorXd center_, scale_;
  int k_;
};

class KnnBackend final : public RegressionBackend {
 public:
  explicit KnnBackend(int k) : k_(k) {}
  std::unique_ptr<RegressionModel> fit(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       std::uint64_t) const override {
    Eigen::RowVectorXd center = X.colwise().mean();
    Eigen::RowVectorXd scale(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double var =
          (X.col(j).array() - center[j]).square().sum() / std::max<double>(1.0, X.rows() - 1);
      scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    Eigen::MatrixXd Z = (X.rowwise() - center).array().rowwise() / scale.array();
    return std::make_unique<KnnModel>(std::move(Z), y, std::move(center),
                                      std::move(scale), k_);
  }
  std::string id() const override { return "knn:" + std::to_string(k_); }

 private:
  int k_;
};

// -------------------------- depth-limited tree ------------------------------

struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  double value = 0.0;
  int left = -1, right = -1;
};

class TreeModel final : public RegressionModel {
 public:
  explicit TreeModel(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    int idx = 0;
    while (nodes_[static_cast<std::size_t>(idx)].feature >= 0) {
      const TreeNode& nd = nodes_[static_cast<std::size_t>(idx)];
      idx = (x[nd.feature] <= nd.threshold) ? nd.left : nd.right;
    }
    return nodes_[static_cast<std::size_t>(idx)].value;
  }

 private:
  std::vector<TreeNode> nodes_;
};

class TreeBackend final : public RegressionBackend {
 public:
  explicit TreeBackend(int depth) : depth_(depth) {}

  std::unique_ptr<RegressionModel> fit(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       std::uint64_t) const override {
    std::vector<TreeNode> nodes;
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(X.rows()));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    build(X, y, rows, 0, nodes);
    return std::make_unique<TreeModel>(std::move(nodes));
  }
  std::string id() const override { return "tree:" + std::to_string(depth_); }

 private:
  static constexpr int kMinLeaf = 5;

  int build(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
            const std::vector<Eigen::Index>& rows, int depth,
            std::vector<TreeNode>& nodes) const {
    const int me = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double mean = 0.0;
    for (auto r : rows) mean += y[r];
    mean /= static_cast<double>(rows.size());
    nodes[static_cast<std::size_t>(me)].value = mean;
    if (depth >= depth_ || rows.size() < 2 * kMinLeaf) return me;

    // Exhaustive SSE-reduction search; first best (feature, threshold) wins.
    double best_score = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, double>> vals(rows.size());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      for (std::size_t i = 0; i < rows.size(); ++i)
        vals[i] = {X(rows[i], j), y[rows[i]]};
      std::sort(vals.begin(), vals.end());
      double left_sum = 0.0, left_sq = 0.0;
      double right_sum = 0.0, right_sq = 0.0;
      for (const auto& [xv, yv] : vals) {
        right_sum += yv;
        right_sq += yv * yv;
      }
      const std::size_t n = vals.size();
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += vals[i].second;
        left_sq += vals[i].second * vals[i].second;
        right_sum -= vals[i].second;
        right_sq -= vals[i].second * vals[i].second;
        if (i + 1 < kMinLeaf || n - i - 1 < kMinLeaf) continue;
        if (vals[i].first == vals[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1);
        const double nr = static_cast<double>(n - i - 1);
        const double score =
            (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
        if (score < best_score - 1e-12) {
          best_score = score;
          best_feature = static_cast<int>(j);
          best_threshold = 0.5 * (vals[i].first + vals[i + 1].first);
        }
      }
    }
    if (best_feature < 0) return me;

    std::vector<Eigen::Index> left_rows, right_rows;
    for (auto r : rows)
      (X(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
    if (left_rows.size() < kMinLeaf || right_rows.size() < kMinLeaf) return me;
    nodes[static_cast<std::size_t>(me)].feature = best_feature;
    nodes[static_cast<std::size_t>(me)].threshold = best_threshold;
    const int l = build(X, y, left_rows, depth + 1, nodes);
    const int r = build(X, y, right_rows, depth + 1, nodes);
    nodes[static_cast<std::size_t>(me)].left = l;
    nodes[static_cast<std::size_t>(me)].right = r;
    return me;
  }

  int depth_;
};

// --------------------------------- ensemble --------------------------------

class EnsembleModel final : public RegressionModel {
 public:
  explicit EnsembleModel(std::vector<std::unique_ptr<RegressionModel>> members)
      : members_(std::move(members)) {}
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    double s = 0.0;
    for (const auto& m : members_) s += m->predict(x);
    return s / static_cast<double>(members_.size());
  }

 private:
  std::vector<std::unique_ptr<RegressionModel>> members_;
};

class EnsembleBackend final : public RegressionBackend {
 public:
  EnsembleBackend(int knn_k, int tree_depth, bool binary)
      : knn_k_(knn_k), tree_depth_(tree_depth), binary_(binary) {}

  std::unique_ptr<RegressionModel> fit(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       std::uint64_t seed) const override {
    std::vector<std::unique_ptr<RegressionModel>> members;
    members.push_back(LinearBackend().fit(X, y, seed));
    if (binary_) members.push_back(LogisticBackend().fit(X, y, seed));
    members.push_back(KnnBackend(knn_k_).fit(X, y, seed));
    members.push_back(TreeBackend(tree_depth_).fit(X, y, seed));
    return std::make_unique<EnsembleModel>(std::move(members));
  }
  std::string id() const override { return "ensemble"; }

 private:
  int knn_k_, tree_depth_;
  bool binary_;
};

}  // namespace

std::unique_ptr<RegressionBackend> make_backend(const BackendConfig& config,
                                                bool binary_response) {
  switch (config.kind) {
    case BackendConfig::Kind::linear:
      return std::make_unique<LinearBackend>();
    case BackendConfig::Kind::logistic:
      if (!binary_response)
        throw ConfigError("logistic backend requires a binary response; "
                          "pick linear/knn/tree/ensemble for regressions");
      return std::make_unique<LogisticBackend>();
    case BackendConfig::Kind::knn:
      return std::make_unique<KnnBackend>(config.knn_k);
    case BackendConfig::Kind::tree:
      return std::make_unique<TreeBackend>(config.tree_depth);
    case BackendConfig::Kind::ensemble:
      return std::make_unique<EnsembleBackend>(config.knn_k, config.tree_depth,
                                               binary_response);
  }
  throw ConfigError("unknown backend kind");
}

}  // namespace flip
