#include "oplanes/loss.hpp"

#include <algorithm>
#include <cmath>

namespace oplanes {

void LossWeights::validate() const {
  if (!(bce >= 0.0) || !(dice >= 0.0)) throw ConfigError("loss weights must be non-negative");
}

Mask valid_pixel_mask(const Mask& mask, const DepthMap& depth, double z) {
  require_same_size(mask, depth, "valid_pixel_mask");
  Mask out(mask.width, mask.height, 1, 0);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = (mask.data[i] && z >= depth.data[i]) ? 1 : 0;
  return out;
}

std::size_t LossTargets::mask_area() const {
  return std::size_t(std::count_if(mask.data.begin(), mask.data.end(), [](std::uint8_t v) { return v != 0; }));
}

void LossTargets::validate(std::size_t n_planes, int h, int w) const {
  if (gt.planes.size() != n_planes || valid.size() != n_planes)
    throw ShapeError("loss targets hold " + std::to_string(gt.planes.size()) + " planes, predictions " +
                     std::to_string(n_planes));
  if (mask.width != w || mask.height != h) throw ShapeError("loss mask resolution differs from predictions");
  for (std::size_t k = 0; k < n_planes; ++k)
    if (gt.planes[k].values.width != w || gt.planes[k].values.height != h || valid[k].width != w ||
        valid[k].height != h)
      throw ShapeError("loss target plane resolution differs from predictions");
}

LossTargets make_loss_targets(const OccupancyRaster& raster, const Mask& mask, const DepthMap& depth,
                              const std::vector<double>& depths, const FrustumRange& range) {
  LossTargets t;
  t.gt = raster.stack(depths, range);
  t.mask = mask;
  for (double z : depths) t.valid.push_back(valid_pixel_mask(mask, depth, z));
  return t;
}

template <typename T>
PlaneTerms plane_terms(const T* logits, const float* gt, const std::uint8_t* valid, std::size_t n, T* grad,
                       double bce_scale, double dice_scale, double eps_p) {
  PlaneTerms terms;
  double a = 0.0, b = 0.0, c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    ++terms.valid_pixels;
    const double y = gt[i];
    const double p_raw = nn::sigmoid(double(logits[i]));
    const double p = std::clamp(p_raw, eps_p, 1.0 - eps_p);
    terms.bce_sum -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    a += y * p_raw;
    b += y;
    c += p_raw;
  }
  const double denom = b + c;
  terms.dice = denom > 0.0 ? 1.0 - 2.0 * a / denom : 0.0;
  if (!grad) return terms;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    const double y = gt[i];
    const double p_raw = nn::sigmoid(double(logits[i]));
    double g = 0.0;
    // The clamp flattens the log terms, so clamped pixels carry no BCE gradient.
    if (p_raw > eps_p && p_raw < 1.0 - eps_p) g += bce_scale * (p_raw - y);
    if (denom > 0.0) g += dice_scale * (-2.0 * (y * denom - a) / (denom * denom)) * p_raw * (1.0 - p_raw);
    grad[i] += T(g);
  }
  return terms;
}

namespace {

template <typename T>
void check_logits(const nn::Tensor<T>& logits, const LossTargets& t) {
  if (logits.ndim() != 4 && logits.ndim() != 3) throw ShapeError("loss expects N x 1 x h x w logits");
  if (logits.ndim() == 4 && logits.dim(1) != 1) throw ShapeError("loss expects one channel per plane");
  t.validate(std::size_t(logits.dim(0)), logits.dim(-2), logits.dim(-1));
}

}  // namespace

template <typename T>
LossValue bce_loss(const nn::Tensor<T>& logits, const LossTargets& t, nn::Tensor<T>* grad, double eps_p) {
  check_logits(logits, t);
  const std::size_t n_planes = std::size_t(logits.dim(0));
  const std::size_t hw = std::size_t(logits.dim(-2)) * logits.dim(-1);
  const std::size_t area = t.mask_area();
  if (grad) *grad = nn::Tensor<T>::zeros_like(logits);
  if (area == 0) return {0.0, true};
  const double scale = 1.0 / (double(n_planes) * double(area));
  double sum = 0.0;
  for (std::size_t k = 0; k < n_planes; ++k)
    sum += plane_terms(logits.data() + k * hw, t.gt.planes[k].values.data.data(), t.valid[k].data.data(), hw,
                       grad ? grad->data() + k * hw : nullptr, scale, 0.0, eps_p)
               .bce_sum;
  return {sum * scale, false};
}

template <typename T>
double dice_loss(const nn::Tensor<T>& logits, const LossTargets& t, nn::Tensor<T>* grad) {
  check_logits(logits, t);
  const std::size_t n_planes = std::size_t(logits.dim(0));
  const std::size_t hw = std::size_t(logits.dim(-2)) * logits.dim(-1);
  if (grad) *grad = nn::Tensor<T>::zeros_like(logits);
  double sum = 0.0;
  for (std::size_t k = 0; k < n_planes; ++k)
    sum += plane_terms(logits.data() + k * hw, t.gt.planes[k].values.data.data(), t.valid[k].data.data(), hw,
                       grad ? grad->data() + k * hw : nullptr, 0.0, 1.0 / double(n_planes))
               .dice;
  return sum / double(n_planes);
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  bce_fine += o.bce_fine;
  dice_fine += o.dice_fine;
  bce_coarse += o.bce_coarse;
  dice_coarse += o.dice_coarse;
  total += o.total;
  no_valid_pixels = no_valid_pixels || o.no_valid_pixels;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double s) const {
  LossBreakdown r = *this;
  r.bce_fine *= s;
  r.dice_fine *= s;
  r.bce_coarse *= s;
  r.dice_coarse *= s;
  r.total *= s;
  return r;
}

namespace {

// One resolution's weighted objective and gradient.
template <typename T>
std::pair<double, double> level_loss(const nn::Tensor<T>& logits, const LossTargets& t, const LossWeights& w,
                                     nn::Tensor<T>* grad, double eps_p, bool& no_valid) {
  check_logits(logits, t);
  const std::size_t n_planes = std::size_t(logits.dim(0));
  const std::size_t hw = std::size_t(logits.dim(-2)) * logits.dim(-1);
  const std::size_t area = t.mask_area();
  if (area == 0) no_valid = true;
  const double bce_scale = area ? 1.0 / (double(n_planes) * double(area)) : 0.0;
  if (grad) *grad = nn::Tensor<T>::zeros_like(logits);
  double bce = 0.0, dice = 0.0;
  for (std::size_t k = 0; k < n_planes; ++k) {
    const PlaneTerms pt = plane_terms(logits.data() + k * hw, t.gt.planes[k].values.data.data(),
                                      t.valid[k].data.data(), hw, grad ? grad->data() + k * hw : nullptr,
                                      w.bce * bce_scale, w.dice / double(n_planes), eps_p);
    bce += pt.bce_sum;
    dice += pt.dice;
  }
  return {bce * bce_scale, dice / double(n_planes)};
}

}  // namespace

template <typename T>
LossBreakdown total_loss(const ForwardOutput<T>& out, const LossTargets& fine, const LossTargets& coarse,
                         const LossWeights& w, bool use_coarse, nn::Tensor<T>* grad_fine, nn::Tensor<T>* grad_coarse,
                         double eps_p) {
  w.validate();
  LossBreakdown r;
  std::tie(r.bce_fine, r.dice_fine) = level_loss(out.fine_logits, fine, w, grad_fine, eps_p, r.no_valid_pixels);
  r.total = w.bce * r.bce_fine + w.dice * r.dice_fine;
  if (use_coarse) {
    std::tie(r.bce_coarse, r.dice_coarse) =
        level_loss(out.coarse_logits, coarse, w, grad_coarse, eps_p, r.no_valid_pixels);
    r.total += w.bce * r.bce_coarse + w.dice * r.dice_coarse;
  } else if (grad_coarse) {
    *grad_coarse = nn::Tensor<T>::zeros_like(out.coarse_logits);
  }
  return r;
}

template <typename T>
typename OPlanesModel<T>::PlaneLossFn plane_loss_fn(const LossTargets& fine, const LossTargets& coarse,
                                                    const LossWeights& w, bool use_coarse, LossBreakdown& acc,
                                                    double eps_p) {
  w.validate();
  const std::size_t n = fine.gt.planes.size();
  if (coarse.gt.planes.size() != n) throw ShapeError("fine and coarse targets disagree on plane count");
  return [&fine, &coarse, w, use_coarse, &acc, eps_p, n](std::size_t k, const nn::Tensor<T>& fl,
                                                         const nn::Tensor<T>& cl, nn::Tensor<T>& gf,
                                                         nn::Tensor<T>& gc) {
    auto one = [&](const LossTargets& t, const nn::Tensor<T>& logits, nn::Tensor<T>& g, double& bce,
                   double& dice) {
      if (t.valid[k].width != logits.dim(-1) || t.valid[k].height != logits.dim(-2))
        throw ShapeError("loss target plane resolution differs from predictions");
      const std::size_t area = t.mask_area();
      if (area == 0) acc.no_valid_pixels = true;
      const double bce_scale = area ? 1.0 / (double(n) * double(area)) : 0.0;
      const PlaneTerms pt = plane_terms(logits.data(), t.gt.planes[k].values.data.data(), t.valid[k].data.data(),
                                        logits.size(), g.data(), w.bce * bce_scale, w.dice / double(n), eps_p);
      bce += pt.bce_sum * bce_scale;
      dice += pt.dice / double(n);
      acc.total += w.bce * pt.bce_sum * bce_scale + w.dice * pt.dice / double(n);
    };
    one(fine, fl, gf, acc.bce_fine, acc.dice_fine);
    if (use_coarse) one(coarse, cl, gc, acc.bce_coarse, acc.dice_coarse);
  };
}

#define OPLANES_LOSS_INSTANTIATE(T)                                                                             \
  template PlaneTerms plane_terms<T>(const T*, const float*, const std::uint8_t*, std::size_t, T*, double,    \
                                     double, double);                                                          \
  template LossValue bce_loss<T>(const nn::Tensor<T>&, const LossTargets&, nn::Tensor<T>*, double);           \
  template double dice_loss<T>(const nn::Tensor<T>&, const LossTargets&, nn::Tensor<T>*);                     \
  template LossBreakdown total_loss<T>(const ForwardOutput<T>&, const LossTargets&, const LossTargets&,        \
                                       const LossWeights&, bool, nn::Tensor<T>*, nn::Tensor<T>*, double);     \
  template typename OPlanesModel<T>::PlaneLossFn plane_loss_fn<T>(const LossTargets&, const LossTargets&,      \
                                                                  const LossWeights&, bool, LossBreakdown&,   \
                                                                  double);

OPLANES_LOSS_INSTANTIATE(float)
OPLANES_LOSS_INSTANTIATE(double)

}  // namespace oplanes
