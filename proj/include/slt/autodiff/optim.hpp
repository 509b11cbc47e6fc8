#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "slt/autodiff/tensor.hpp"

namespace slt::ad {

struct ParamGroup {
  std::string name;
  std::vector<Tensor> params;
  double lr = 1e-3;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 0.9825;  // per-epoch learning-rate factor
};

/// Adam with per-group learning rates and exponential per-epoch decay.
class Adam {
 public:
  explicit Adam(std::vector<ParamGroup> groups, AdamOptions opt = {})
      : groups_(std::move(groups)), opt_(opt) {
    for (const auto& g : groups_) {
      lr0_.push_back(g.lr);
      for (const auto& p : g.params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
  }

  void zero_grad() {
    for (auto& g : groups_)
      for (auto& p : g.params) p.zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, double(t_));
    std::size_t slot = 0;
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      const double lr = lr0_[gi] * std::pow(opt_.decay, double(epoch_));
      for (auto& p : groups_[gi].params) {
        auto& m = m_[slot];
        auto& v = v_[slot];
        ++slot;
        auto& val = p.value();
        const auto& g = p.grad();
        for (std::size_t i = 0; i < val.size(); ++i) {
          m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
          v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
          val[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
        }
      }
    }
  }

  void end_epoch() { ++epoch_; }
  int epoch() const { return epoch_; }
  long long steps() const { return t_; }
  double lr(std::size_t group) const { return lr0_.at(group) * std::pow(opt_.decay, double(epoch_)); }
  const std::vector<ParamGroup>& groups() const { return groups_; }

 private:
  std::vector<ParamGroup> groups_;
  AdamOptions opt_;
  std::vector<double> lr0_;
  std::vector<std::vector<double>> m_, v_;
  long long t_ = 0;
  int epoch_ = 0;
};

}  // namespace slt::ad
