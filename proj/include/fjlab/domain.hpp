/*
 * Copyright 2026 The fjlab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Validated value types shared by every module: beliefs on the probability
// simplex, snapshots of all agents' beliefs, Friedkin-Johnsen parameters and
// observed deliberation trajectories.

#ifndef FJLAB_DOMAIN_HPP_
#define FJLAB_DOMAIN_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fjlab/error.hpp"

namespace fjlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Tolerance for every simplex membership check. Values within it are
// renormalized, values outside raise.
inline constexpr double kSimplexTol = 1e-9;

namespace detail {

inline std::string fmt_index(const char* what, long i) {
  return std::string(what) + " " + std::to_string(i);
}

// Vectors whose sum is already within a few ulps of 1 are left untouched;
// anything else is divided by its sum once. The output always lands in the
// untouched band, so renormalizing twice is the identity (bitwise).
inline void renormalize_in_place(Eigen::Ref<Vector> v) {
  const double band = 16.0 * static_cast<double>(v.size()) *
                      std::numeric_limits<double>::epsilon();
  const double s = v.sum();
  if (std::abs(s - 1.0) <= band) return;
  v /= s;
}

}  // namespace detail

// Index of the largest entry; ties go to the lowest index.
inline int argmax_index(const Eigen::Ref<const Vector>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

class BeliefVector {
 public:
  // Accepts entries >= -kSimplexTol (clamped to 0) whose sum is within
  // kSimplexTol of 1 (renormalized). Anything else throws.
  explicit BeliefVector(Vector values) : p_(std::move(values)) {
    if (p_.size() < 2) {
      throw Error(ErrorCode::kInvariantViolation,
                  "belief needs at least 2 entries, got " +
                      std::to_string(p_.size()));
    }
    for (int c = 0; c < p_.size(); ++c) {
      if (!std::isfinite(p_[c]) || p_[c] < -kSimplexTol) {
        throw Error(ErrorCode::kNegativeEntry,
                    detail::fmt_index("entry", c) + " = " +
                        std::to_string(p_[c]));
      }
      if (p_[c] < 0.0) p_[c] = 0.0;
    }
    const double s = p_.sum();
    if (std::abs(s - 1.0) > kSimplexTol) {
      throw Error(ErrorCode::kInvariantViolation,
                  "belief sums to " + std::to_string(s));
    }
    detail::renormalize_in_place(p_);
  }

  BeliefVector(std::initializer_list<double> values)
      : BeliefVector(Eigen::Map<const Vector>(values.begin(),
                                              static_cast<long>(values.size()))
                         .eval()) {}

  static BeliefVector uniform(int d) {
    return BeliefVector(Vector::Constant(d, 1.0 / d));
  }

  static BeliefVector one_hot(int d, int k) {
    Vector v = Vector::Zero(d);
    v[k] = 1.0;
    return BeliefVector(std::move(v));
  }

  int size() const { return static_cast<int>(p_.size()); }
  double operator[](int c) const { return p_[c]; }
  const Vector& values() const { return p_; }

  friend bool operator==(const BeliefVector& a, const BeliefVector& b) {
    return a.p_ == b.p_;
  }

 private:
  Vector p_;
};

// Clamps tiny negative drift, then divides by the sum.
inline BeliefVector normalize_belief(const Eigen::Ref<const Vector>& raw) {
  if (raw.size() < 2) {
    throw Error(ErrorCode::kInvariantViolation,
                "belief needs at least 2 entries");
  }
  Vector v = raw;
  bool any_positive = false;
  for (int c = 0; c < v.size(); ++c) {
    if (!std::isfinite(v[c]) || v[c] < -kSimplexTol) {
      throw Error(ErrorCode::kNegativeEntry,
                  detail::fmt_index("entry", c) + " = " +
                      std::to_string(v[c]));
    }
    if (v[c] <= 0.0) {
      v[c] = 0.0;
    } else {
      any_positive = true;
    }
  }
  if (!any_positive) {
    throw Error(ErrorCode::kAllZeroVector, "no strictly positive entry");
  }
  detail::renormalize_in_place(v);
  return BeliefVector(std::move(v));
}

inline int argmax_label(const BeliefVector& b) {
  return argmax_index(b.values());
}

// n x d matrix whose rows are agent beliefs.
class BeliefSnapshot {
 public:
  explicit BeliefSnapshot(Matrix rows) : rows_(std::move(rows)) {
    validate_and_renormalize(nullptr);
  }

  explicit BeliefSnapshot(const std::vector<BeliefVector>& rows) {
    if (rows.empty()) {
      throw Error(ErrorCode::kInvariantViolation, "snapshot has no agents");
    }
    const int d = rows.front().size();
    rows_.resize(static_cast<long>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != d) {
        throw Error(ErrorCode::kShapeMismatch,
                    detail::fmt_index("agent", static_cast<long>(i)) +
                        " has d=" + std::to_string(rows[i].size()) +
                        ", expected " + std::to_string(d));
      }
      rows_.row(static_cast<long>(i)) = rows[i].values().transpose();
    }
  }

  // Renormalizes each row and reports the largest |row sum - 1| seen before
  // renormalization.
  static BeliefSnapshot renormalized(Matrix rows, double* max_drift) {
    BeliefSnapshot out;
    out.rows_ = std::move(rows);
    out.validate_and_renormalize(max_drift);
    return out;
  }

  int n() const { return static_cast<int>(rows_.rows()); }
  int d() const { return static_cast<int>(rows_.cols()); }
  const Matrix& matrix() const { return rows_; }
  BeliefVector row(int i) const { return BeliefVector(rows_.row(i).transpose()); }
  Vector mean() const { return rows_.colwise().mean().transpose(); }

  friend bool operator==(const BeliefSnapshot& a, const BeliefSnapshot& b) {
    return a.rows_.rows() == b.rows_.rows() &&
           a.rows_.cols() == b.rows_.cols() && a.rows_ == b.rows_;
  }

 private:
  BeliefSnapshot() = default;

  void validate_and_renormalize(double* max_drift) {
    if (rows_.rows() < 1) {
      throw Error(ErrorCode::kInvariantViolation, "snapshot has no agents");
    }
    if (rows_.cols() < 2) {
      throw Error(ErrorCode::kInvariantViolation,
                  "beliefs need at least 2 entries");
    }
    double drift = 0.0;
    for (int i = 0; i < rows_.rows(); ++i) {
      for (int c = 0; c < rows_.cols(); ++c) {
        double& x = rows_(i, c);
        if (!std::isfinite(x) || x < -kSimplexTol) {
          throw Error(ErrorCode::kNegativeEntry,
                      detail::fmt_index("agent", i) + ", " +
                          detail::fmt_index("entry", c) + " = " +
                          std::to_string(x));
        }
        if (x < 0.0) x = 0.0;
      }
      const double s = rows_.row(i).sum();
      drift = std::max(drift, std::abs(s - 1.0));
      if (std::abs(s - 1.0) > kSimplexTol) {
        throw Error(ErrorCode::kInvariantViolation,
                    detail::fmt_index("agent", i) + " row sums to " +
                        std::to_string(s));
      }
      Vector r = rows_.row(i).transpose();
      detail::renormalize_in_place(r);
      rows_.row(i) = r.transpose();
    }
    if (max_drift != nullptr) *max_drift = drift;
  }

  Matrix rows_;
};

// Directed adjacency with no self loops, every other edge present.
inline Mask complete_mask(int n) {
  Mask m = Mask::Constant(n, n, true);
  for (int i = 0; i < n; ++i) m(i, i) = false;
  return m;
}

// Uniform weight over each row's allowed edges; rows without edges are zero.
inline Matrix uniform_weights(const Mask& mask) {
  Matrix w = Matrix::Zero(mask.rows(), mask.cols());
  for (int i = 0; i < mask.rows(); ++i) {
    const long k = mask.row(i).count();
    if (k == 0) continue;
    for (int j = 0; j < mask.cols(); ++j) {
      if (mask(i, j)) w(i, j) = 1.0 / static_cast<double>(k);
    }
  }
  return w;
}

// Stubbornness gamma, retention alpha, and a row-stochastic, zero-diagonal
// peer weight matrix w supported on mask.
class FJParameters {
 public:
  FJParameters(Vector gamma, Vector alpha, Matrix w, Mask mask)
      : gamma_(std::move(gamma)),
        alpha_(std::move(alpha)),
        w_(std::move(w)),
        mask_(std::move(mask)) {
    validate();
  }

  FJParameters(Vector gamma, Vector alpha, Matrix w)
      : FJParameters(std::move(gamma), std::move(alpha), std::move(w),
                     complete_mask(0)) {}

  int n() const { return static_cast<int>(gamma_.size()); }
  const Vector& gamma() const { return gamma_; }
  const Vector& alpha() const { return alpha_; }
  const Matrix& w() const { return w_; }
  const Mask& mask() const { return mask_; }

  bool has_edges(int i) const { return mask_.row(i).any(); }

 private:
  void validate() {
    const long n = gamma_.size();
    if (n < 1) {
      throw Error(ErrorCode::kInvariantViolation, "parameters need n >= 1");
    }
    if (mask_.size() == 0) mask_ = complete_mask(static_cast<int>(n));
    if (alpha_.size() != n || w_.rows() != n || w_.cols() != n ||
        mask_.rows() != n || mask_.cols() != n) {
      throw Error(ErrorCode::kShapeMismatch,
                  "gamma, alpha, w and mask must agree on n=" +
                      std::to_string(n));
    }
    for (int i = 0; i < n; ++i) {
      if (!(gamma_[i] >= 0.0 && gamma_[i] <= 1.0)) {
        throw Error(ErrorCode::kInvariantViolation,
                    detail::fmt_index("gamma", i) + " outside [0,1]");
      }
      if (!(alpha_[i] >= 0.0 && alpha_[i] <= 1.0)) {
        throw Error(ErrorCode::kInvariantViolation,
                    detail::fmt_index("alpha", i) + " outside [0,1]");
      }
      if (mask_(i, i)) {
        throw Error(ErrorCode::kInvariantViolation,
                    detail::fmt_index("mask has a self loop at agent", i));
      }
      for (int j = 0; j < n; ++j) {
        double& x = w_(i, j);
        if (!std::isfinite(x) || x < -kSimplexTol) {
          throw Error(ErrorCode::kNegativeEntry,
                      "w(" + std::to_string(i) + "," + std::to_string(j) +
                          ") = " + std::to_string(x));
        }
        if (!mask_(i, j)) {
          if (std::abs(x) > kSimplexTol) {
            throw Error(ErrorCode::kInvariantViolation,
                        "w(" + std::to_string(i) + "," + std::to_string(j) +
                            ") is nonzero outside the mask");
          }
          x = 0.0;
        } else if (x < 0.0) {
          x = 0.0;
        }
      }
      if (has_edges(i)) {
        const double s = w_.row(i).sum();
        if (std::abs(s - 1.0) > kSimplexTol) {
          throw Error(ErrorCode::kInvariantViolation,
                      detail::fmt_index("w row", i) + " sums to " +
                          std::to_string(s));
        }
        Vector r = w_.row(i).transpose();
        detail::renormalize_in_place(r);
        w_.row(i) = r.transpose();
      }
    }
  }

  Vector gamma_;
  Vector alpha_;
  Matrix w_;
  Mask mask_;
};

// Readout weights eta and the induced ensemble weights pi over innate beliefs.
struct AggregationWeights {
  Vector eta;
  Vector pi;
};

// Rounds 0..T of every agent's belief; round 0 holds the innate beliefs.
class DeliberationTrajectory {
 public:
  DeliberationTrajectory(std::vector<BeliefSnapshot> snapshots,
                         std::string sample_id,
                         std::optional<int> correct_label = std::nullopt,
                         std::map<std::string, std::string> metadata = {},
                         std::vector<std::string> label_names = {})
      : snapshots_(std::move(snapshots)),
        sample_id_(std::move(sample_id)),
        correct_label_(correct_label),
        metadata_(std::move(metadata)),
        label_names_(std::move(label_names)) {
    if (snapshots_.empty()) {
      throw Error(ErrorCode::kInvariantViolation,
                  "trajectory '" + sample_id_ + "' has no snapshots");
    }
    const int n = snapshots_.front().n();
    const int d = snapshots_.front().d();
    for (std::size_t t = 1; t < snapshots_.size(); ++t) {
      if (snapshots_[t].n() != n || snapshots_[t].d() != d) {
        throw Error(ErrorCode::kShapeMismatch,
                    "trajectory '" + sample_id_ + "' round " +
                        std::to_string(t) + " changes shape");
      }
    }
    if (correct_label_ && (*correct_label_ < 0 || *correct_label_ >= d)) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "trajectory '" + sample_id_ + "' label " +
                      std::to_string(*correct_label_) + " outside [0," +
                      std::to_string(d) + ")");
    }
    if (!label_names_.empty() && static_cast<int>(label_names_.size()) != d) {
      throw Error(ErrorCode::kShapeMismatch,
                  "trajectory '" + sample_id_ + "' has " +
                      std::to_string(label_names_.size()) +
                      " label names for d=" + std::to_string(d));
    }
  }

  int n() const { return snapshots_.front().n(); }
  int d() const { return snapshots_.front().d(); }
  // Number of transitions T; there are T + 1 snapshots.
  int rounds() const { return static_cast<int>(snapshots_.size()) - 1; }

  const std::vector<BeliefSnapshot>& snapshots() const { return snapshots_; }
  const BeliefSnapshot& innate() const { return snapshots_.front(); }
  const BeliefSnapshot& final_snapshot() const { return snapshots_.back(); }
  const std::string& sample_id() const { return sample_id_; }
  const std::optional<int>& correct_label() const { return correct_label_; }
  const std::map<std::string, std::string>& metadata() const {
    return metadata_;
  }
  const std::vector<std::string>& label_names() const { return label_names_; }

  void set_metadata(const std::string& key, std::string value) {
    metadata_[key] = std::move(value);
  }

 private:
  std::vector<BeliefSnapshot> snapshots_;
  std::string sample_id_;
  std::optional<int> correct_label_;
  std::map<std::string, std::string> metadata_;
  std::vector<std::string> label_names_;
};

// True when every entry is >= 0 and the entries sum to 1 within tol.
inline bool on_simplex(const Eigen::Ref<const Vector>& a,
                       double tol = kSimplexTol) {
  if (a.size() == 0) return false;
  for (int i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || a[i] < -tol) return false;
  }
  return std::abs(a.sum() - 1.0) <= tol;
}

inline void require_simplex(const Eigen::Ref<const Vector>& a,
                            const char* what) {
  if (!on_simplex(a)) {
    throw Error(ErrorCode::kWeightNotSimplex,
                std::string(what) + " is not on the simplex");
  }
}

}  // namespace fjlab

#endif  // FJLAB_DOMAIN_HPP_
