#include "shiftmoment/regressors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "shiftmoment/errors.hpp"

namespace shiftmoment {

namespace {

constexpr double kRidge = 1e-10;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

class FunctionModel final : public RegressionModel {
 public:
  FunctionModel(std::function<double(std::span<const double>)> fn, std::size_t n) : fn_(std::move(fn)), n_(n) {}
  double predict(std::span<const double> x) const override { return fn_(x); }
  RegressorDiagnostics diagnostics() const override { return {.training_size = n_}; }

 private:
  std::function<double(std::span<const double>)> fn_;
  std::size_t n_;
};

// ---------------------------------------------------------------------------
// Linear least squares on tensor-product polynomial features.

class LinearModel final : public RegressionModel {
 public:
  LinearModel(int degree, const LabeledDataset& data) : exponents_(monomial_exponents(data.dim(), degree, true)) {
    const auto n = static_cast<Eigen::Index>(data.size());
    const auto p = static_cast<Eigen::Index>(exponents_.size());
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    std::vector<double> row(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < n; ++i) {
      eval_monomials(exponents_, data.xs[static_cast<std::size_t>(i)], row);
      for (Eigen::Index k = 0; k < p; ++k) X(i, k) = row[static_cast<std::size_t>(k)];
      y(i) = data.ys[static_cast<std::size_t>(i)];
    }

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
    if (cod.rank() < p) {
      rank_deficient_ = true;
      coef_ = cod.solve(y);
    } else {
      // Ridge on the non-constant columns of the per-sample Gram matrix, so
      // duplicating every row leaves the solution unchanged.
      const double scale = 1.0 / static_cast<double>(n);
      Eigen::MatrixXd gram = scale * (X.transpose() * X);
      for (Eigen::Index k = 1; k < p; ++k) gram(k, k) += kRidge;
      const Eigen::VectorXd rhs = scale * (X.transpose() * y);
      const auto ldlt = gram.ldlt();
      coef_ = ldlt.solve(rhs);
      // refinement against the unregularized system removes the ridge bias
      const Eigen::MatrixXd plain = scale * (X.transpose() * X);
      for (int step = 0; step < 2; ++step) coef_ += ldlt.solve(rhs - plain * coef_);
    }
    n_ = data.size();
  }

  double predict(std::span<const double> x) const override {
    std::vector<double> row(exponents_.size());
    eval_monomials(exponents_, x, row);
    double v = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) v += coef_(static_cast<Eigen::Index>(k)) * row[k];
    return v;
  }

  RegressorDiagnostics diagnostics() const override {
    return {.training_size = n_, .rank_deficient = rank_deficient_};
  }

 private:
  std::vector<std::vector<int>> exponents_;
  Eigen::VectorXd coef_;
  std::size_t n_ = 0;
  bool rank_deficient_ = false;
};

// ---------------------------------------------------------------------------
// Moving least squares: at each query y, a weighted polynomial fit in the
// scaled local coordinates (x - y) / h, evaluated at the origin.

class MlsModel final : public RegressionModel {
 public:
  MlsModel(const MlsSpec& spec, const LabeledDataset& data)
      : xs_(data.xs), ys_(data.ys), exponents_(monomial_exponents(data.dim(), spec.degree, false)) {
    if (data.size() < exponents_.size()) {
      throw ConfigError("mls: " + std::to_string(data.size()) + " points but polynomial basis has " +
                        std::to_string(exponents_.size()) + " terms");
    }
    rho_ = covering_radius(xs_);
    h_ = spec.bandwidth_factor * rho_;
    if (!(h_ > 0.0)) h_ = 1e-12;
  }

  double predict(std::span<const double> y) const override {
    const std::size_t basis = exponents_.size();
    const double max_radius = 4.0 * std::sqrt(static_cast<double>(xs_.dim()));
    double radius = h_;
    std::vector<std::size_t> nbr;
    std::vector<double> local(xs_.dim());
    std::vector<double> row(basis);
    bool widened = false;
    for (;;) {
      nbr.clear();
      const double r2 = radius * radius;
      for (std::size_t i = 0; i < xs_.size(); ++i) {
        if (squared_distance(xs_[i], y) < r2) nbr.push_back(i);
      }
      if (nbr.size() >= basis) {
        const auto m = static_cast<Eigen::Index>(nbr.size());
        Eigen::MatrixXd A(m, static_cast<Eigen::Index>(basis));
        Eigen::VectorXd b(m);
        for (Eigen::Index r = 0; r < m; ++r) {
          const auto i = nbr[static_cast<std::size_t>(r)];
          const auto xi = xs_[i];
          for (std::size_t j = 0; j < xi.size(); ++j) local[j] = (xi[j] - y[j]) / radius;
          const double w = std::sqrt(wendland_weight(std::sqrt(squared_distance(xi, y)) / radius));
          eval_monomials(exponents_, local, row);
          for (std::size_t k = 0; k < basis; ++k) A(r, static_cast<Eigen::Index>(k)) = w * row[k];
          b(r) = w * ys_[i];
        }
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
        if (cod.rank() == static_cast<Eigen::Index>(basis) || radius > max_radius) {
          if (widened) widened_.fetch_add(1, std::memory_order_relaxed);
          const Eigen::VectorXd coef = cod.solve(b);
          // the constant monomial is first; at the origin only it survives
          return coef(0);
        }
      }
      if (radius > max_radius) {
        // fewer distinct points than the basis even with global support
        if (widened) widened_.fetch_add(1, std::memory_order_relaxed);
        double acc = 0.0;
        for (double v : ys_) acc += v;
        return acc / static_cast<double>(ys_.size());
      }
      radius *= 2.0;
      widened = true;
    }
  }

  RegressorDiagnostics diagnostics() const override {
    return {.training_size = ys_.size(), .covering_radius = rho_, .bandwidth = h_};
  }

  std::size_t widened_predictions() const override { return widened_.load(std::memory_order_relaxed); }

 private:
  PointSet xs_;
  std::vector<double> ys_;
  std::vector<std::vector<int>> exponents_;
  double rho_ = 0.0;
  double h_ = 0.0;
  mutable std::atomic<std::size_t> widened_{0};
};

// ---------------------------------------------------------------------------
// Random forest of CART regression trees grown on bootstrap resamples.

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
};

class RegressionTree {
 public:
  RegressionTree(const LabeledDataset& data, std::vector<std::size_t> idx, std::size_t min_leaf)
      : data_(&data), min_leaf_(min_leaf) {
    if (data.dim() == 1) {
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t a, std::size_t b) { return data.xs[a][0] < data.xs[b][0]; });
    }
    idx_ = std::move(idx);
    grow(0, idx_.size());
    data_ = nullptr;
    idx_.clear();
    idx_.shrink_to_fit();
  }

  double predict(std::span<const double> x) const {
    std::int32_t k = 0;
    while (nodes_[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& n = nodes_[static_cast<std::size_t>(k)];
      k = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes_[static_cast<std::size_t>(k)].value;
  }

 private:
  std::int32_t grow(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    const std::size_t count = end - begin;
    double sum = 0.0;
    for (std::size_t k = begin; k < end; ++k) sum += data_->ys[idx_[k]];
    nodes_.back().value = sum / static_cast<double>(count);

    if (count < 2 * min_leaf_) return id;

    const std::size_t dim = data_->dim();
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < dim; ++j) {
      std::span<const std::size_t> sorted;
      if (dim == 1) {
        sorted = std::span<const std::size_t>(idx_.data() + begin, count);
      } else {
        order.assign(idx_.begin() + static_cast<std::ptrdiff_t>(begin), idx_.begin() + static_cast<std::ptrdiff_t>(end));
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return data_->xs[a][j] < data_->xs[b][j]; });
        sorted = order;
      }
      // SSE reduction of a split = sumL^2/nL + sumR^2/nR - sum^2/n.
      const double base = sum * sum / static_cast<double>(count);
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < count; ++k) {
        left_sum += data_->ys[sorted[k]];
        const std::size_t nl = k + 1;
        const std::size_t nr = count - nl;
        if (nl < min_leaf_) continue;
        if (nr < min_leaf_) break;
        const double xl = data_->xs[sorted[k]][j];
        const double xr = data_->xs[sorted[k + 1]][j];
        if (!(xl < xr)) continue;
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - base;
        // strict improvement: ties keep the lower threshold (and lower feature)
        if (gain > best_gain * (1.0 + 1e-12) + 1e-15) {
          best_gain = gain;
          best_feature = static_cast<int>(j);
          best_threshold = 0.5 * (xl + xr);
        }
      }
    }
    if (best_feature < 0) return id;

    const auto f = static_cast<std::size_t>(best_feature);
    auto mid_it = std::stable_partition(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                                        idx_.begin() + static_cast<std::ptrdiff_t>(end),
                                        [&](std::size_t i) { return data_->xs[i][f] <= best_threshold; });
    const auto mid = static_cast<std::size_t>(mid_it - idx_.begin());
    const auto left = grow(begin, mid);
    const auto right = grow(mid, end);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  const LabeledDataset* data_;
  std::size_t min_leaf_;
  std::vector<std::size_t> idx_;
  std::vector<TreeNode> nodes_;
};

class ForestModel final : public RegressionModel {
 public:
  ForestModel(const ForestSpec& spec, const LabeledDataset& data, Rng& rng) : n_(data.size()) {
    trees_.reserve(static_cast<std::size_t>(spec.trees));
    std::vector<std::size_t> boot(n_);
    for (int t = 0; t < spec.trees; ++t) {
      for (auto& b : boot) b = static_cast<std::size_t>(rng.below(n_));
      trees_.emplace_back(data, boot, static_cast<std::size_t>(spec.min_leaf));
    }
  }

  double predict(std::span<const double> x) const override {
    double acc = 0.0;
    for (const auto& t : trees_) acc += t.predict(x);
    return acc / static_cast<double>(trees_.size());
  }

  RegressorDiagnostics diagnostics() const override { return {.training_size = n_}; }

 private:
  std::size_t n_;
  std::vector<RegressionTree> trees_;
};

}  // namespace

void LabeledDataset::validate() const {
  if (xs.size() != ys.size()) {
    throw InputError("labeled dataset: " + std::to_string(xs.size()) + " points but " + std::to_string(ys.size()) +
                     " responses");
  }
  xs.require_unit_cube("labeled dataset");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> idx) const {
  LabeledDataset out{xs.subset(idx), {}};
  out.ys.reserve(idx.size());
  for (auto i : idx) out.ys.push_back(ys[i]);
  return out;
}

void validate(const RegressorSpec& spec) {
  std::visit(overloaded{
                 [](const LinearSpec& s) {
                   if (s.degree < 0 || s.degree > kMaxPolynomialDegree) throw ConfigError("regressor.degree must be in [0, 6]");
                 },
                 [](const MlsSpec& s) {
                   if (s.degree < 0 || s.degree > kMaxPolynomialDegree) throw ConfigError("regressor.degree must be in [0, 6]");
                   if (!(s.bandwidth_factor > 0.0)) throw ConfigError("regressor.bandwidth_factor must be > 0");
                 },
                 [](const ForestSpec& s) {
                   if (s.trees < 1) throw ConfigError("regressor.trees must be >= 1");
                   if (s.min_leaf < 1) throw ConfigError("regressor.min_leaf must be >= 1");
                 },
             },
             spec);
}

std::string regressor_label(const RegressorSpec& spec) {
  return std::visit(overloaded{
                        [](const LinearSpec& s) { return "linear(degree=" + std::to_string(s.degree) + ")"; },
                        [](const MlsSpec& s) { return "mls(degree=" + std::to_string(s.degree) + ")"; },
                        [](const ForestSpec& s) {
                          return "forest(trees=" + std::to_string(s.trees) + ",min_leaf=" + std::to_string(s.min_leaf) + ")";
                        },
                    },
                    spec);
}

nlohmann::json to_json(const RegressorSpec& spec) {
  return std::visit(overloaded{
                        [](const LinearSpec& s) { return nlohmann::json{{"kind", "linear"}, {"degree", s.degree}}; },
                        [](const MlsSpec& s) {
                          return nlohmann::json{{"kind", "mls"}, {"degree", s.degree}, {"bandwidth_factor", s.bandwidth_factor}};
                        },
                        [](const ForestSpec& s) {
                          return nlohmann::json{{"kind", "forest"}, {"trees", s.trees}, {"min_leaf", s.min_leaf}};
                        },
                    },
                    spec);
}

RegressorSpec regressor_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("regressor: missing field 'kind'");
  const auto kind = j.at("kind").get<std::string>();
  RegressorSpec spec;
  if (kind == "linear") {
    spec = LinearSpec{j.value("degree", 1)};
  } else if (kind == "mls") {
    spec = MlsSpec{j.value("degree", 2), j.value("bandwidth_factor", 2.5)};
  } else if (kind == "forest") {
    spec = ForestSpec{j.value("trees", 200), j.value("min_leaf", 5)};
  } else {
    throw ConfigError("regressor: unknown kind '" + kind + "'");
  }
  validate(spec);
  return spec;
}

FittedRegressor FittedRegressor::from_function(std::function<double(std::span<const double>)> fn,
                                               std::size_t training_size) {
  return FittedRegressor(std::make_shared<FunctionModel>(std::move(fn), training_size));
}

double FittedRegressor::predict(std::span<const double> x) const { return model_->predict(x); }

FittedRegressor fit(const RegressorSpec& spec, const LabeledDataset& data, Rng& rng) {
  validate(spec);
  data.validate();
  if (data.size() == 0) throw ConfigError("fit: empty training set");
  return std::visit(overloaded{
                        [&](const LinearSpec& s) {
                          return FittedRegressor(std::make_shared<LinearModel>(s.degree, data));
                        },
                        [&](const MlsSpec& s) { return FittedRegressor(std::make_shared<MlsModel>(s, data)); },
                        [&](const ForestSpec& s) {
                          return FittedRegressor(std::make_shared<ForestModel>(s, data, rng));
                        },
                    },
                    spec);
}

double covering_radius(const PointSet& points, std::size_t probe_grid_size) {
  if (points.empty()) throw ConfigError("covering_radius: no points");
  const std::size_t d = points.dim();
  if (probe_grid_size == 0) {
    probe_grid_size = d == 1 ? 2048 : std::max<std::size_t>(2, static_cast<std::size_t>(std::pow(65536.0, 1.0 / static_cast<double>(d))));
  }
  // probe_grid_size cells per axis, probed at their g + 1 vertices
  const std::size_t g = std::max<std::size_t>(probe_grid_size, 1);
  const auto coord = [g](std::size_t k) { return static_cast<double>(k) / static_cast<double>(g); };

  if (d == 1) {
    std::vector<double> xs(points.coords());
    std::sort(xs.begin(), xs.end());
    double worst = 0.0;
    for (std::size_t k = 0; k <= g; ++k) {
      const double y = coord(k);
      auto it = std::lower_bound(xs.begin(), xs.end(), y);
      double best = std::numeric_limits<double>::infinity();
      if (it != xs.end()) best = *it - y;
      if (it != xs.begin()) best = std::min(best, y - *(it - 1));
      worst = std::max(worst, best);
    }
    return worst;
  }

  std::size_t total = 1;
  for (std::size_t j = 0; j < d; ++j) total *= g + 1;
  std::vector<double> probe(d);
  double worst2 = 0.0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t j = 0; j < d; ++j) {
      probe[j] = coord(rem % (g + 1));
      rem /= g + 1;
    }
    double best2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) best2 = std::min(best2, squared_distance(points[i], probe));
    worst2 = std::max(worst2, best2);
  }
  return std::sqrt(worst2);
}

double wendland_weight(double r) {
  if (r >= 1.0) return 0.0;
  const double s = 1.0 - r;
  const double s2 = s * s;
  return s2 * s2 * (4.0 * r + 1.0);
}

std::vector<std::vector<int>> monomial_exponents(std::size_t dim, int degree, bool tensor) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(dim, 0);
  // odometer over per-axis exponents 0..degree
  for (;;) {
    const int total = std::accumulate(e.begin(), e.end(), 0);
    if (tensor || total <= degree) out.push_back(e);
    std::size_t j = 0;
    while (j < dim && e[j] == degree) e[j++] = 0;
    if (j == dim) break;
    ++e[j];
  }
  // constant first, then by total degree; stable within a degree
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::accumulate(a.begin(), a.end(), 0) < std::accumulate(b.begin(), b.end(), 0);
  });
  return out;
}

void eval_monomials(const std::vector<std::vector<int>>& exponents, std::span<const double> x, std::span<double> out) {
  for (std::size_t k = 0; k < exponents.size(); ++k) {
    double v = 1.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      for (int p = 0; p < exponents[k][j]; ++p) v *= x[j];
    }
    out[k] = v;
  }
}

}  // namespace shiftmoment
