#pragma once

// The bilinear relation operator r(h, t) = h^T A t + P h + Q t and the
// distances/similarities built on top of it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "relcomp/common.hpp"
#include "relcomp/error.hpp"

namespace relcomp {

/// Dense d x d x d tensor stored slice-major: entry (k, i, j) lives at
/// k*d*d + i*d + j, so slice k is a row-major d x d block.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(std::size_t d) : d_(d), data_(d * d * d, 0.0) {}
  Tensor3(std::size_t d, std::vector<double> data) : d_(d), data_(std::move(data)) {
    if (data_.size() != d * d * d)
      throw DimensionError("tensor needs " + std::to_string(d * d * d) + " entries, got " +
                           std::to_string(data_.size()));
  }

  std::size_t dim() const noexcept { return d_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t k, std::size_t i, std::size_t j) {
    return data_[(k * d_ + i) * d_ + j];
  }
  double operator()(std::size_t k, std::size_t i, std::size_t j) const {
    return data_[(k * d_ + i) * d_ + j];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  /// d x d^2 view: row k is slice k flattened row-major.
  Eigen::Map<RowMatrix> unfolded() {
    return {data_.data(), static_cast<Eigen::Index>(d_), static_cast<Eigen::Index>(d_ * d_)};
  }
  Eigen::Map<const RowMatrix> unfolded() const {
    return {data_.data(), static_cast<Eigen::Index>(d_), static_cast<Eigen::Index>(d_ * d_)};
  }

  double squared_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }
  double frobenius_norm() const { return std::sqrt(squared_norm()); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t d_ = 0;
  std::vector<double> data_;
};

enum class ConstraintMode { general, diagonal };

inline const char* to_string(ConstraintMode m) {
  return m == ConstraintMode::general ? "general" : "diagonal";
}

/// Parameters (A, P, Q) of the bilinear operator. In diagonal mode P and Q
/// are pI and qI and only the scalars are stored.
class BilinearOperator {
 public:
  static BilinearOperator general(Tensor3 a, Matrix p, Matrix q) {
    BilinearOperator op(std::move(a), ConstraintMode::general);
    const auto d = static_cast<Eigen::Index>(op.dim());
    if (p.rows() != d || p.cols() != d || q.rows() != d || q.cols() != d)
      throw DimensionError("P and Q must be " + std::to_string(d) + "x" + std::to_string(d));
    if (!p.allFinite() || !q.allFinite()) throw InputError("operator has non-finite entries");
    op.P_ = std::move(p);
    op.Q_ = std::move(q);
    return op;
  }

  static BilinearOperator diagonal(Tensor3 a, double p, double q) {
    BilinearOperator op(std::move(a), ConstraintMode::diagonal);
    if (!std::isfinite(p) || !std::isfinite(q))
      throw InputError("operator has non-finite entries");
    op.p_ = p;
    op.q_ = q;
    return op;
  }

  /// A = 0, P = scale*I, Q = -scale*I.
  static BilinearOperator pairdiff(std::size_t d, double scale = 1.0) {
    return diagonal(Tensor3(d), scale, -scale);
  }

  static BilinearOperator zero(std::size_t d, ConstraintMode mode = ConstraintMode::diagonal) {
    if (mode == ConstraintMode::diagonal) return diagonal(Tensor3(d), 0.0, 0.0);
    const auto n = static_cast<Eigen::Index>(d);
    return general(Tensor3(d), Matrix::Zero(n, n), Matrix::Zero(n, n));
  }

  std::size_t dim() const noexcept { return A_.dim(); }
  ConstraintMode mode() const noexcept { return mode_; }

  const Tensor3& tensor() const noexcept { return A_; }
  Tensor3& tensor() noexcept { return A_; }

  Matrix P() const {
    if (mode_ == ConstraintMode::diagonal) return p_ * Matrix::Identity(n(), n());
    return P_;
  }
  Matrix Q() const {
    if (mode_ == ConstraintMode::diagonal) return q_ * Matrix::Identity(n(), n());
    return Q_;
  }

  /// The diagonal scalar; in general mode the mean of diag(P).
  double p() const { return mode_ == ConstraintMode::diagonal ? p_ : P_.diagonal().mean(); }
  double q() const { return mode_ == ConstraintMode::diagonal ? q_ : Q_.diagonal().mean(); }

  void set_scalars(double p, double q) {
    require(ConstraintMode::diagonal);
    p_ = p;
    q_ = q;
  }
  Matrix& P_matrix() {
    require(ConstraintMode::general);
    return P_;
  }
  Matrix& Q_matrix() {
    require(ConstraintMode::general);
    return Q_;
  }
  const Matrix& P_matrix() const {
    require(ConstraintMode::general);
    return P_;
  }
  const Matrix& Q_matrix() const {
    require(ConstraintMode::general);
    return Q_;
  }

  bool all_finite() const {
    if (!A_.all_finite()) return false;
    if (mode_ == ConstraintMode::diagonal) return std::isfinite(p_) && std::isfinite(q_);
    return P_.allFinite() && Q_.allFinite();
  }

  /// Hash of the mode and every parameter bit pattern.
  std::string digest() const {
    Fnv1a h;
    h.update(static_cast<std::uint64_t>(dim()));
    h.update(static_cast<std::uint64_t>(mode_));
    h.update(A_.values());
    if (mode_ == ConstraintMode::diagonal) {
      h.update(p_);
      h.update(q_);
    } else {
      h.update(std::span<const double>(P_.data(), static_cast<std::size_t>(P_.size())));
      h.update(std::span<const double>(Q_.data(), static_cast<std::size_t>(Q_.size())));
    }
    return h.hex();
  }

 private:
  BilinearOperator(Tensor3 a, ConstraintMode mode) : A_(std::move(a)), mode_(mode) {
    if (A_.dim() < 1) throw DimensionError("operator dimensionality must be >= 1");
    if (!A_.all_finite()) throw InputError("operator has non-finite entries");
  }

  Eigen::Index n() const { return static_cast<Eigen::Index>(dim()); }

  void require(ConstraintMode m) const {
    if (mode_ != m)
      throw UnsupportedModeError(std::string("operation requires ") + to_string(m) +
                                 " mode, operator is " + to_string(mode_));
  }

  Tensor3 A_;
  ConstraintMode mode_;
  double p_ = 0.0;
  double q_ = 0.0;
  Matrix P_;
  Matrix Q_;
};

using VectorRef = Eigen::Ref<const Vector>;

namespace detail {

inline void check_dim(const BilinearOperator& op, const VectorRef& v, const char* what) {
  if (static_cast<std::size_t>(v.size()) != op.dim())
    throw DimensionError(std::string(what) + " has dimension " + std::to_string(v.size()) +
                         ", operator expects " + std::to_string(op.dim()));
}

/// Row-major flattening of the outer product h t^T.
inline void outer_features(const VectorRef& h, const VectorRef& t, Vector& out) {
  const auto d = h.size();
  out.resize(d * d);
  for (Eigen::Index i = 0; i < d; ++i) out.segment(i * d, d) = h[i] * t;
}

}  // namespace detail

/// r = h^T A t + P h + Q t written into `out`; `scratch` holds the d^2 outer
/// product so hot loops can reuse storage.
inline void compose_into(const BilinearOperator& op, const VectorRef& h, const VectorRef& t,
                         Vector& out, Vector& scratch) {
  detail::check_dim(op, h, "head vector");
  detail::check_dim(op, t, "tail vector");
  detail::outer_features(h, t, scratch);
  out.noalias() = op.tensor().unfolded() * scratch;
  if (op.mode() == ConstraintMode::diagonal) {
    out += op.p() * h;
    out += op.q() * t;
  } else {
    out.noalias() += op.P_matrix() * h;
    out.noalias() += op.Q_matrix() * t;
  }
}

inline Vector compose(const BilinearOperator& op, const VectorRef& h, const VectorRef& t) {
  Vector out, scratch;
  compose_into(op, h, t, out, scratch);
  return out;
}

/// h - t, or (h - t) scaled per dimension by `inv_sigma` when given.
inline Vector pairdiff(const VectorRef& h, const VectorRef& t,
                       const std::optional<Vector>& inv_sigma = std::nullopt) {
  if (h.size() != t.size())
    throw DimensionError("pairdiff: head has dimension " + std::to_string(h.size()) +
                         ", tail has " + std::to_string(t.size()));
  Vector r = h - t;
  if (inv_sigma) {
    if (inv_sigma->size() != h.size()) throw DimensionError("pairdiff: inv_sigma dimension mismatch");
    if (!((inv_sigma->array() > 0.0).all()))
      throw InputError("pairdiff: inv_sigma entries must be strictly positive");
    r.array() *= inv_sigma->array();
  }
  return r;
}

/// ||r(h, t) - r(h2, t2)||^2.
inline double relational_distance_sq(const BilinearOperator& op, const VectorRef& h,
                                     const VectorRef& t, const VectorRef& h2,
                                     const VectorRef& t2) {
  return (compose(op, h, t) - compose(op, h2, t2)).squaredNorm();
}

struct Similarity {
  double value = 0.0;
  /// One of the relation vectors had zero norm; value is 0 by convention.
  bool degenerate = false;
};

inline Similarity cosine(const VectorRef& a, const VectorRef& b) {
  if (a.size() != b.size()) throw DimensionError("cosine: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {std::clamp(a.dot(b) / (na * nb), -1.0, 1.0), false};
}

inline Similarity relational_similarity(const BilinearOperator& op, const VectorRef& h,
                                        const VectorRef& t, const VectorRef& h2,
                                        const VectorRef& t2) {
  return cosine(compose(op, h, t), compose(op, h2, t2));
}

inline double frobenius_norm_A(const BilinearOperator& op) { return op.tensor().frobenius_norm(); }

// ---------------------------------------------------------------------------
// JSON serialization: {d, constraint_mode, p, q, A, P, Q}, arrays row-major.

inline nlohmann::json to_json(const BilinearOperator& op) {
  const auto d = static_cast<Eigen::Index>(op.dim());
  auto flatten = [d](const Matrix& m) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(d * d));
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) v.push_back(m(i, j));
    return v;
  };
  nlohmann::json j;
  j["d"] = op.dim();
  j["constraint_mode"] = to_string(op.mode());
  j["p"] = op.p();
  j["q"] = op.q();
  j["A"] = std::vector<double>(op.tensor().values().begin(), op.tensor().values().end());
  j["P"] = flatten(op.P());
  j["Q"] = flatten(op.Q());
  return j;
}

inline BilinearOperator operator_from_json(const nlohmann::json& j) {
  try {
    const auto d = j.at("d").get<std::size_t>();
    if (d < 1) throw InputError("operator: d must be >= 1");
    const auto mode = j.at("constraint_mode").get<std::string>();
    Tensor3 a(d, j.at("A").get<std::vector<double>>());
    if (mode == "diagonal") return BilinearOperator::diagonal(std::move(a), j.at("p").get<double>(),
                                                               j.at("q").get<double>());
    if (mode != "general") throw InputError("operator: unknown constraint_mode '" + mode + "'");

    auto unflatten = [d](const std::vector<double>& v, const char* name) {
      if (v.size() != d * d)
        throw DimensionError(std::string("operator: ") + name + " needs " +
                             std::to_string(d * d) + " entries");
      const auto n = static_cast<Eigen::Index>(d);
      Matrix m(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < n; ++k) m(i, k) = v[static_cast<std::size_t>(i * n + k)];
      return m;
    };
    return BilinearOperator::general(std::move(a),
                                     unflatten(j.at("P").get<std::vector<double>>(), "P"),
                                     unflatten(j.at("Q").get<std::vector<double>>(), "Q"));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("operator: ") + e.what());
  }
}

inline void save_operator(const std::filesystem::path& path, const BilinearOperator& op) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << to_json(op).dump() << '\n';
}

inline BilinearOperator load_operator(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open operator file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return operator_from_json(j);
}

}  // namespace relcomp
