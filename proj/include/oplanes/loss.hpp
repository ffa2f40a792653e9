#pragma once

#include <vector>

#include "oplanes/model.hpp"
#include "oplanes/representation.hpp"

namespace oplanes {

struct LossWeights {
  double bce = 1.0;
  double dice = 1.0;
  void validate() const;
};

inline constexpr double kProbClamp = 1e-7;

// 1 where the pixel is in the mask and the plane lies at or behind the
// observed surface (z >= depth).
Mask valid_pixel_mask(const Mask& mask, const DepthMap& depth, double z);

// Supervision for one resolution: GT planes, their valid masks and the mask
// whose area normalizes BCE.
struct LossTargets {
  OPlaneStack gt;
  std::vector<Mask> valid;
  Mask mask;
  std::size_t mask_area() const;
  void validate(std::size_t n_planes, int h, int w) const;
};

LossTargets make_loss_targets(const OccupancyRaster& raster, const Mask& mask, const DepthMap& depth,
                              const std::vector<double>& depths, const FrustumRange& range);

// Loss contributions of a single plane.
struct PlaneTerms {
  double bce_sum = 0.0;  // unnormalized negative log-likelihood over valid pixels
  double dice = 0.0;     // 1 - coefficient, 0 when the denominator vanishes
  std::size_t valid_pixels = 0;
};

// Evaluates one plane. When `grad` is given it accumulates
// bce_scale * d(bce_sum)/dlogit + dice_scale * d(dice)/dlogit.
template <typename T>
PlaneTerms plane_terms(const T* logits, const float* gt, const std::uint8_t* valid, std::size_t n, T* grad = nullptr,
                       double bce_scale = 0.0, double dice_scale = 0.0, double eps_p = kProbClamp);

struct LossValue {
  double value = 0.0;
  bool no_valid_pixels = false;  // set when the normalizer vanished; value is then 0
};

// logits: N x 1 x h x w (or N x h x w).
// BCE = sum over planes and valid pixels of NLL / (N * Sum(mask)).
template <typename T>
LossValue bce_loss(const nn::Tensor<T>& logits, const LossTargets& t, nn::Tensor<T>* grad = nullptr,
                   double eps_p = kProbClamp);
// Mean over planes of 1 - 2 A / (B + C).
template <typename T>
double dice_loss(const nn::Tensor<T>& logits, const LossTargets& t, nn::Tensor<T>* grad = nullptr);

struct LossBreakdown {
  double bce_fine = 0.0;
  double dice_fine = 0.0;
  double bce_coarse = 0.0;
  double dice_coarse = 0.0;
  double total = 0.0;
  bool no_valid_pixels = false;
  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double s) const;
};

// Weighted BCE + DICE at both resolutions. `use_coarse` false drops the
// coarse term entirely. Gradients are written (not accumulated) when given.
template <typename T>
LossBreakdown total_loss(const ForwardOutput<T>& out, const LossTargets& fine, const LossTargets& coarse,
                         const LossWeights& w = {}, bool use_coarse = true, nn::Tensor<T>* grad_fine = nullptr,
                         nn::Tensor<T>* grad_coarse = nullptr, double eps_p = kProbClamp);

// Per-plane callback for OPlanesModel::forward_backward computing the same
// objective; terms accumulate into `acc`.
template <typename T>
typename OPlanesModel<T>::PlaneLossFn plane_loss_fn(const LossTargets& fine, const LossTargets& coarse,
                                                    const LossWeights& w, bool use_coarse, LossBreakdown& acc,
                                                    double eps_p = kProbClamp);

}  // namespace oplanes
