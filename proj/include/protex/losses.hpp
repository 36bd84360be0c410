#pragma once

#include <vector>

#include "protex/core_math.hpp"
#include "protex/model.hpp"

namespace protex {

inline constexpr double kLogFloor = 1e-12;

struct LossBreakdown {
  double ce = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double total = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

struct GradientSet {
  Matrix d_projection;
  Matrix d_prototypes;
  Matrix d_linear;

  static GradientSet zeros_like(const PrototypeHead& head);
  double max_abs() const;
};

/// Which training phase a loss evaluation belongs to.
///
/// Joint:          CE(norm(d)) + lambda1 * P1(d) + lambda2 * P2(d), raw d in the prototype terms.
/// PrototypeOnly:  P1(norm(d_c)), d_c restricted to class-c examples and class-c prototypes.
/// Classifier:     CE(norm(d)) + lambda * P2(norm(d_c)).
///
/// norm() is the identity when the head does not normalize.
enum class Phase { Joint, PrototypeOnly, Classifier };

struct LossSpec {
  Phase phase = Phase::Joint;
  int target_class = 1;
  double lambda1 = 0.9;
  double lambda2 = 0.9;
  double lambda = 2.0;

  static LossSpec joint(const TrainConfig& c);
  static LossSpec prototype_only(int cls);
  static LossSpec classifier(const TrainConfig& c, int cls);
};

/// Mean of -log(max(p_true, 1e-12)).
double cross_entropy_loss(const Matrix& probabilities, const std::vector<int>& labels);

/// Mean over prototype columns that have any active entry of the column minimum.
double loss_p1(const DistanceMatrix& d);

/// Mean over example rows of the row minimum. Every row needs an active entry.
double loss_p2(const DistanceMatrix& d);

/// dP1/dD: 1/m' at each column's argmin.
Matrix loss_p1_grad(const DistanceMatrix& d);

/// dP2/dD: 1/n at each row's argmin.
Matrix loss_p2_grad(const DistanceMatrix& d);

LossBreakdown total_loss(double ce, double p1, double p2, double lambda1, double lambda2);

/// Rows of class `cls` against the full prototype set, with only class-`cls`
/// prototype columns active. `rows` receives the selected example indices.
DistanceMatrix class_restricted(const DistanceMatrix& raw, const std::vector<int>& labels,
                                const std::vector<int>& proto_class, int cls, std::vector<Eigen::Index>& rows);

LossBreakdown evaluate_loss(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                            const LossSpec& spec);

struct LossAndGradient {
  LossBreakdown loss;
  GradientSet grads;
};

/// Analytic gradients of the selected loss with respect to every parameter group.
LossAndGradient backward(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                         const LossSpec& spec);

/// evaluate_loss().total recomputed with plain loops in extended precision.
double reference_loss(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                      const LossSpec& spec);

/// Worst relative error |a - b| / max(|a|, |b|, 1e-8) between `analytic` and
/// five-point central differences (step h) of reference_loss over every scalar
/// parameter.
double finite_diff_check(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                         const LossSpec& spec, double h, const GradientSet& analytic);

double finite_diff_check(const PrototypeHead& head, const Matrix& x, const std::vector<int>& labels,
                         const LossSpec& spec, double h);

}  // namespace protex
