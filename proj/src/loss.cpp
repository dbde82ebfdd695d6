#include "dnres/loss.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dnres {

std::string to_string(const LossSpec& spec) {
  if (!spec.edge_aware) return "mse";
  return spec.edge.mode == EdgeMode::sobel_magnitude ? "edge-a" : "edge-b";
}

LossSpec parse_loss_spec(const std::string& name, double weight) {
  LossSpec spec;
  if (name == "mse") {
    spec = LossSpec::mse();
  } else if (name == "edge-a") {
    spec = LossSpec::edge_a();
  } else if (name == "edge-b") {
    spec = LossSpec::edge_b();
  } else {
    throw InvalidArgument("unknown loss '" + name + "' (expected mse, edge-a or edge-b)");
  }
  if (weight >= 0.0) spec.edge.weight = weight;
  return spec;
}

template <class T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape("mse_loss", target.shape(), pred.shape());
  LossResult<T> r{{}, Tensor<T>(pred.shape())};
  const double count = static_cast<double>(pred.size());
  auto p = pred.data();
  auto t = target.data();
  auto g = r.grad.data();
  double sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    sum += d * d;
    g[i] = static_cast<T>(2.0 * d / count);
  }
  r.report.mse_term = sum / count;
  r.report.total = r.report.mse_term;
  return r;
}

template <class T>
Tensor<T> sobel_edge_map(const Tensor<T>& clean, const EdgeMapSpec& spec) {
  Tensor<T> out(clean.shape());
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(clean.h());
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(clean.w());
  auto at = [&](std::span<const T> plane, std::ptrdiff_t y, std::ptrdiff_t x) {
    y = std::clamp<std::ptrdiff_t>(y, 0, H - 1);
    x = std::clamp<std::ptrdiff_t>(x, 0, W - 1);
    return static_cast<double>(plane[static_cast<std::size_t>(y * W + x)]);
  };
  for (std::size_t n = 0; n < clean.n(); ++n) {
    for (std::size_t c = 0; c < clean.c(); ++c) {
      auto src = clean.plane(n, c);
      auto dst = out.plane(n, c);
      for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t x = 0; x < W; ++x) {
          const double gx = (at(src, y - 1, x + 1) + 2 * at(src, y, x + 1) + at(src, y + 1, x + 1)) -
                            (at(src, y - 1, x - 1) + 2 * at(src, y, x - 1) + at(src, y + 1, x - 1));
          const double gy = (at(src, y + 1, x - 1) + 2 * at(src, y + 1, x) + at(src, y + 1, x + 1)) -
                            (at(src, y - 1, x - 1) + 2 * at(src, y - 1, x) + at(src, y - 1, x + 1));
          const double mag = std::sqrt(gx * gx + gy * gy);
          double m;
          if (spec.mode == EdgeMode::sobel_magnitude) {
            m = std::min(1.0, mag);
          } else {
            m = 255.0 * mag >= spec.threshold ? 1.0 : 0.0;
          }
          dst[static_cast<std::size_t>(y * W + x)] = static_cast<T>(m);
        }
      }
    }
  }
  return out;
}

template <class T>
LossResult<T> edge_aware_loss(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& edge_map,
                              double weight) {
  require_same_shape("edge_aware_loss", target.shape(), pred.shape());
  require_same_shape("edge_aware_loss", target.shape(), edge_map.shape());
  if (weight == 0.0) return mse_loss(pred, target);
  LossResult<T> r{{}, Tensor<T>(pred.shape())};
  const double count = static_cast<double>(pred.size());
  auto p = pred.data();
  auto t = target.data();
  auto m = edge_map.data();
  auto g = r.grad.data();
  double mse = 0, edge = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pv = static_cast<double>(p[i]);
    const double tv = static_cast<double>(t[i]);
    const double mv = static_cast<double>(m[i]);
    const double d = pv - tv;
    const double e = tv * mv - pv * mv;
    mse += d * d;
    edge += e * e;
    g[i] = static_cast<T>(2.0 * d / count + weight * 2.0 * mv * mv * d / count);
  }
  r.report.mse_term = mse / count;
  r.report.edge_term = edge / count;
  r.report.total = r.report.mse_term + weight * r.report.edge_term;
  return r;
}

template <class T>
LossResult<T> edge_aware_loss(const Tensor<T>& pred, const Tensor<T>& target, const EdgeMapSpec& spec) {
  require_same_shape("edge_aware_loss", target.shape(), pred.shape());
  if (spec.weight == 0.0) return mse_loss(pred, target);
  return edge_aware_loss(pred, target, sobel_edge_map(target, spec), spec.weight);
}

template <class T>
LossResult<T> compute_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossSpec& spec) {
  return spec.edge_aware ? edge_aware_loss(pred, target, spec.edge) : mse_loss(pred, target);
}

template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double max_val) {
  require_same_shape("psnr", a.shape(), b.shape());
  double sum = 0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    sum += d * d;
  }
  if (sum == 0.0) return kPsnrInfinity;
  const double mse = sum / static_cast<double>(x.size());
  return 10.0 * std::log10(max_val * max_val / mse);
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double r = (size - 1) / 2.0;
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Valid-mode separable filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t ks = k.size();
  const std::size_t oh = h - ks + 1;
  const std::size_t ow = w - ks + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < ks; ++i) s += k[i] * src[y * w + x + i];
      tmp[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < ks; ++i) s += k[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

template <class T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& o) {
  require_same_shape("ssim", a.shape(), b.shape());
  if (o.window <= 0 || o.window % 2 == 0) throw InvalidArgument("ssim: window must be a positive odd size");
  const auto win = static_cast<std::size_t>(o.window);
  if (a.h() < win || a.w() < win) {
    throw ShapeError("ssim", a.h() < win ? "height" : "width", win, std::min(a.h(), a.w()));
  }
  if (a.size() == 0) throw InvalidArgument("ssim: empty image");
  const auto k = gaussian_window(o.window, o.sigma);
  const double c1 = (o.k1 * o.max_val) * (o.k1 * o.max_val);
  const double c2 = (o.k2 * o.max_val) * (o.k2 * o.max_val);
  const std::size_t h = a.h(), w = a.w(), plane = h * w;

  double total = 0;
  std::size_t count = 0;
  std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
  for (std::size_t n = 0; n < a.n(); ++n) {
    for (std::size_t c = 0; c < a.c(); ++c) {
      auto pa = a.plane(n, c);
      auto pb = b.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        x[i] = static_cast<double>(pa[i]);
        y[i] = static_cast<double>(pb[i]);
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
      const auto mx = filter_valid(x, h, w, k);
      const auto my = filter_valid(y, h, w, k);
      const auto sxx = filter_valid(xx, h, w, k);
      const auto syy = filter_valid(yy, h, w, k);
      const auto sxy = filter_valid(xy, h, w, k);
      for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      }
      count += mx.size();
    }
  }
  return total / static_cast<double>(count);
}

#define DNRES_INSTANTIATE_LOSS(T)                                                                         \
  template LossResult<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sobel_edge_map(const Tensor<T>&, const EdgeMapSpec&);                               \
  template LossResult<T> edge_aware_loss(const Tensor<T>&, const Tensor<T>&, const EdgeMapSpec&);        \
  template LossResult<T> edge_aware_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);  \
  template LossResult<T> compute_loss(const Tensor<T>&, const Tensor<T>&, const LossSpec&);              \
  template double psnr(const Tensor<T>&, const Tensor<T>&, double);                                      \
  template double ssim(const Tensor<T>&, const Tensor<T>&, const SsimOptions&);

DNRES_INSTANTIATE_LOSS(float)
DNRES_INSTANTIATE_LOSS(double)

#undef DNRES_INSTANTIATE_LOSS

}  // namespace dnres
