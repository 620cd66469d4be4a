#include "slowsem/optimizer.hpp"

#include <cmath>

namespace slowsem {

AdamW::AdamW(ParamSet params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_.params) {
    m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
}

void AdamW::step(const std::vector<std::string>& active_prefixes) {
  ++t_;
  const double lr = config_.learning_rate;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.params.size(); ++i) {
    const auto& p = params_.params[i];
    if (!active_prefixes.empty()) {
      bool active = false;
      for (const auto& prefix : active_prefixes)
        if (p.name.compare(0, prefix.size(), prefix) == 0) active = true;
      if (!active) continue;
    }
    Matrix& w = *p.value;
    const Matrix& g = *p.grad;
    w *= 1.0 - lr * config_.weight_decay;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseAbs2();
    w.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
  }
}

std::vector<BufferRef> AdamW::state() {
  std::vector<BufferRef> out;
  for (std::size_t i = 0; i < params_.params.size(); ++i) {
    out.push_back({params_.params[i].name + ".adam_m", &m_[i]});
    out.push_back({params_.params[i].name + ".adam_v", &v_[i]});
  }
  return out;
}

}  // namespace slowsem
