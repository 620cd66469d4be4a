#include "slowsem/objectives.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include "slowsem/errors.hpp"

namespace slowsem {

namespace {

std::atomic<std::size_t> g_zero_norm_events{0};

}  // namespace

void LossConfig::validate() const {
  if (!(tau_ssltt > 0.0) || !(tau_vla > 0.0)) throw ConfigError("temperatures must be positive");
  if (delta_t < 1) throw ConfigError("delta_t must be >= 1");
}

const char* to_string(LossMode mode) {
  switch (mode) {
    case LossMode::SSLTT: return "ssltt";
    case LossMode::VLA: return "vla";
    case LossMode::Both: return "both";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& text) {
  if (text == "ssltt") return LossMode::SSLTT;
  if (text == "vla") return LossMode::VLA;
  if (text == "both") return LossMode::Both;
  throw ConfigError("unknown loss mode '" + text + "'");
}

std::size_t zero_norm_events() { return g_zero_norm_events.load(); }
void reset_zero_norm_events() { g_zero_norm_events = 0; }

double cosine_similarity(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_similarity: size mismatch");
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0.0 || nv == 0.0) {
    ++g_zero_norm_events;
    return 0.0;
  }
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

ContrastiveResult contrastive_loss(const Matrix& anchors, const Matrix& partners, double tau,
                                   bool with_grad) {
  if (anchors.rows() != partners.rows() || anchors.cols() != partners.cols())
    throw std::invalid_argument("contrastive_loss: anchors and partners differ in shape");
  const Eigen::Index n = anchors.cols();
  if (n < 2) throw std::invalid_argument("contrastive_loss: need at least 2 pairs");
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be positive");
  const Eigen::Index m = 2 * n;

  Matrix z(anchors.rows(), m);
  z << anchors, partners;
  Vector norms = z.colwise().norm().transpose();
  Matrix u = z;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (norms(k) == 0.0) {
      ++g_zero_norm_events;
      u.col(k).setZero();
    } else {
      u.col(k) /= norms(k);
    }
  }
  const Matrix logits = (u.transpose() * u) / tau;

  ContrastiveResult out;
  out.per_term.resize(static_cast<std::size_t>(m));
  Matrix grad_logits;
  if (with_grad) grad_logits = Matrix::Zero(m, m);
  double total = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index pos = (k + n) % m;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < m; ++l)
      if (l != k) max_logit = std::max(max_logit, logits(k, l));
    double denom = 0.0;
    for (Eigen::Index l = 0; l < m; ++l)
      if (l != k) denom += std::exp(logits(k, l) - max_logit);
    const double term = -(logits(k, pos) - max_logit) + std::log(denom);
    out.per_term[static_cast<std::size_t>(k)] = term;
    total += term;
    if (with_grad) {
      for (Eigen::Index l = 0; l < m; ++l)
        if (l != k) grad_logits(k, l) = std::exp(logits(k, l) - max_logit) / denom;
      grad_logits(k, pos) -= 1.0;
    }
  }
  out.loss = total / static_cast<double>(m);
  if (with_grad) {
    grad_logits /= static_cast<double>(m);
    const Matrix sym = grad_logits + grad_logits.transpose();
    const Matrix du = (u * sym) / tau;
    Matrix dz(z.rows(), m);
    for (Eigen::Index k = 0; k < m; ++k) {
      if (norms(k) == 0.0) {
        dz.col(k).setZero();
        continue;
      }
      dz.col(k) = (du.col(k) - u.col(k) * u.col(k).dot(du.col(k))) / norms(k);
    }
    out.grad_anchors = dz.leftCols(n);
    out.grad_partners = dz.rightCols(n);
  }
  return out;
}

double loss_ssltt(const Matrix& z_anchor, const Matrix& z_partner, double tau) {
  return contrastive_loss(z_anchor, z_partner, tau).loss;
}

double loss_vla(const Matrix& z2, const Matrix& z3, double tau) {
  return contrastive_loss(z2, z3, tau).loss;
}

double total_loss(double ssltt_term, double vla_term, LossMode mode) {
  double total = 0.0;
  if (uses_ssltt(mode)) {
    if (!std::isfinite(ssltt_term)) throw NumericalError("non-finite SSLTT loss");
    total += ssltt_term;
  }
  if (uses_vla(mode)) {
    if (!std::isfinite(vla_term)) throw NumericalError("non-finite VLA loss");
    total += vla_term;
  }
  return total;
}

CropWindow sample_crop(int width, int height, Rng& rng, double min_area_fraction) {
  if (!(min_area_fraction > 0.0 && min_area_fraction <= 1.0))
    throw std::invalid_argument("sample_crop: min_area_fraction must be in (0, 1]");
  CropWindow w;
  w.area_fraction = min_area_fraction >= 1.0 ? 1.0 : rng.uniform(min_area_fraction, 1.0);
  const double side = std::sqrt(w.area_fraction);
  w.width = side * width;
  w.height = side * height;
  w.x0 = (width - w.width) * (min_area_fraction >= 1.0 ? 0.0 : rng.uniform01());
  w.y0 = (height - w.height) * (min_area_fraction >= 1.0 ? 0.0 : rng.uniform01());
  return w;
}

FloatImage crop_resize(const FloatImage& image, const CropWindow& window, int out_size) {
  FloatImage out(out_size, out_size);
  const double sx = window.width / out_size, sy = window.height / out_size;
  for (int oy = 0; oy < out_size; ++oy) {
    const double fy = std::clamp(window.y0 + (oy + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_size; ++ox) {
      const double fx = std::clamp(window.x0 + (ox + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(x0, y0, c) * (1.0 - wx) + image.at(x1, y0, c) * wx;
        const double bottom = image.at(x0, y1, c) * (1.0 - wx) + image.at(x1, y1, c) * wx;
        out.at(ox, oy, c) = top * (1.0 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

FloatImage augment_crop_resize(const FloatImage& image, Rng& rng, int out_size, double min_area_fraction) {
  return crop_resize(image, sample_crop(image.width, image.height, rng, min_area_fraction), out_size);
}

}  // namespace slowsem
