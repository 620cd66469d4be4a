#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "slowsem/model.hpp"
#include "slowsem/nn.hpp"
#include "slowsem/rng.hpp"

namespace slowsem {

struct LossConfig {
  double tau_ssltt = 0.5;
  double tau_vla = 0.1;
  int delta_t = 2;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

enum class LossMode { SSLTT, VLA, Both };

const char* to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);
inline bool uses_ssltt(LossMode m) { return m != LossMode::VLA; }
inline bool uses_vla(LossMode m) { return m != LossMode::SSLTT; }

// Number of zero-norm vectors met by the cosine routines since the last reset.
std::size_t zero_norm_events();
void reset_zero_norm_events();

// u.v / (|u||v|); 0 when either vector has zero norm (and the event is counted).
double cosine_similarity(const Vector& u, const Vector& v);

struct ContrastiveResult {
  double loss = 0.0;              // mean over the 2n terms
  std::vector<double> per_term;   // anchors first, then partners
  Matrix grad_anchors;            // d x n, empty unless requested
  Matrix grad_partners;
};

// Symmetric softmax-contrastive loss over the 2n columns of [anchors partners].
// Column i of anchors is paired with column i of partners. For every element the
// candidates are all other 2n-1 elements, the partner included.
ContrastiveResult contrastive_loss(const Matrix& anchors, const Matrix& partners, double tau,
                                   bool with_grad = false);

// Temporal loss over z1 of anchors and their temporal neighbors.
double loss_ssltt(const Matrix& z_anchor, const Matrix& z_partner, double tau);
// Alignment loss between image embeddings z2 and category embeddings z3.
double loss_vla(const Matrix& z2, const Matrix& z3, double tau);

// Unweighted sum of the enabled terms. Throws NumericalError on non-finite input.
double total_loss(double ssltt_term, double vla_term, LossMode mode = LossMode::Both);

// Square crop window in source pixel coordinates.
struct CropWindow {
  double x0 = 0.0, y0 = 0.0, width = 0.0, height = 0.0;
  double area_fraction = 1.0;
};

// Area fraction uniform on [min_area_fraction, 1], aspect ratio kept, position uniform.
CropWindow sample_crop(int width, int height, Rng& rng, double min_area_fraction = 0.5);

// Bilinear resampling of the window to out_size x out_size (edge clamped).
FloatImage crop_resize(const FloatImage& image, const CropWindow& window, int out_size);

FloatImage augment_crop_resize(const FloatImage& image, Rng& rng, int out_size,
                               double min_area_fraction = 0.5);

}  // namespace slowsem
